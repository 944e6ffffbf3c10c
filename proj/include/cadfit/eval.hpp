#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cadfit/annotation.hpp"
#include "cadfit/cad_model.hpp"

namespace cadfit {

enum class ScaleErrorMode { max_axis, mean_ratio };

struct AlignmentThresholds {
  double translation_max = 0.20;  // meters
  double rotation_max_deg = 20.0;
  double scale_ratio_max = 0.20;
  ScaleErrorMode scale_mode = ScaleErrorMode::max_axis;

  void validate() const;
};

struct AlignmentCheck {
  bool correct = false;
  bool class_match = false;
  bool translation_ok = false;
  bool rotation_ok = false;
  bool scale_ok = false;
  double translation_error = 0.0;  // meters
  double rotation_error_deg = 0.0;  // after symmetry reduction
  double scale_error = 0.0;         // |ratio - 1|, per scale_mode
};

// Rotation error (radians) minimized over the gt symmetry group about the
// up-axis. When `gt_scale_used` is given it receives the gt scale expressed in
// the frame of the minimizing group element (x/y swapped on odd quarter turns).
double symmetric_rotation_error(const Pose9D& pred, const Pose9D& gt, Symmetry symmetry,
                                Vec3* gt_scale_used = nullptr);

double scale_error(const Vec3& pred, const Vec3& gt, ScaleErrorMode mode = ScaleErrorMode::max_axis);

// Throws Error(invalid_argument) when the instance ids differ. The gt
// annotation's symmetry defines the rotation group.
AlignmentCheck alignment_correct(const Annotation& pred, const Annotation& gt, const AlignmentThresholds& thresholds = {});
// alignment_correct and the retrieved model's class equals the gt model's class.
bool retrieval_aware_correct(const Annotation& pred, const Annotation& gt, const AlignmentThresholds& thresholds = {});

struct CompletionReport {
  double cd_x1e4 = 0.0;   // mean symmetric squared chamfer * 1e4
  double emd_x1e2 = 0.0;  // mean EMD * 1e2
  std::size_t pairs = 0;
};

// Pairs must have equal sizes; exact EMD up to the exact-assignment limit,
// auction above it.
CompletionReport completion_report(std::span<const PointCloud> pred, std::span<const PointCloud> gt);

struct LatentLoss {
  double total = 0.0;
  double mse = 0.0;
  double kl = 0.0;
};

// mse = mean squared difference; kl = KL(softmax(z_c) || softmax(z_p)).
LatentLoss latent_loss(std::span<const double> z_p, std::span<const double> z_c, double lambda_mse = 1.0,
                       double lambda_kl = 0.5);

struct InstanceResult {
  std::string instance_id;
  std::string class_label;
  bool predicted = false;
  AlignmentCheck check;
  bool retrieval_correct = false;
  std::optional<double> cd_x1e4;
  std::optional<double> emd_x1e2;
};

struct ClassResult {
  std::size_t count = 0;
  std::size_t correct = 0;
  std::size_t retrieval_correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
  double retrieval_accuracy() const { return count ? static_cast<double>(retrieval_correct) / count : 0.0; }
};

struct EvalReport {
  std::vector<InstanceResult> instances;  // gt order
  std::map<std::string, ClassResult> classes;
  double instance_accuracy = 0.0;
  double instance_retrieval_accuracy = 0.0;
  double class_accuracy = 0.0;  // unweighted mean over classes
  double class_retrieval_accuracy = 0.0;
  std::size_t unmatched_predictions = 0;
  std::optional<CompletionReport> shape;

  std::string to_json() const;
  std::string to_table() const;
};

// Ground-truth objects without a (non-removed) prediction count as incorrect.
// With a database, posed model samples of prediction and gt are also compared
// by chamfer / EMD over `shape_samples` points.
EvalReport evaluate(const AnnotationSet& pred, const AnnotationSet& gt, const AlignmentThresholds& thresholds = {},
                    const CadDatabase* database = nullptr, std::size_t shape_samples = 512);

}  // namespace cadfit
