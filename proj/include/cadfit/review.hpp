#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "cadfit/annotation.hpp"
#include "cadfit/cad_model.hpp"
#include "cadfit/pipeline.hpp"
#include "cadfit/refine.hpp"
#include "cadfit/scene.hpp"

namespace cadfit {

struct ReviewConfig {
  RcWeights weights;
  RefineConfig refine;  // long budget, 300 steps by default
  std::chrono::milliseconds refine_timeout{60000};
  std::size_t max_points = 2000;
  SymmetryOptions symmetry;
  // Appends one JSON line per mutation when set.
  std::optional<std::filesystem::path> journal_file;

  void validate() const;
};

enum class MutationKind { rotate, swap, refine, status };
std::string_view to_string(MutationKind k);

// One journaled mutation. `refine_steps` records the steps a refinement
// actually completed so that replay reproduces timed-out runs.
struct JournalEntry {
  std::uint64_t sequence = 0;
  MutationKind kind = MutationKind::rotate;
  std::string instance_id;
  int degrees = 0;
  std::string cad_id;
  bool override_class = false;
  int refine_steps = 0;
  Status status = Status::verified;
  int revision_after = 0;

  std::string to_json() const;
  static JournalEntry from_json(const std::string& line);
};

struct AnnotationSummary {
  std::string instance_id;
  std::string class_label;
  std::string cad_id;
  double score = 0.0;
  Status status = Status::auto_;
  int revision = 0;
  std::size_t views = 0;
};

struct Overlay {
  std::string png;  // target | candidate | difference, side by side
  int width = 0;    // of one pane
  int height = 0;
  double iou = 0.0;
  // Pixels in exactly one silhouette over the target silhouette area.
  double difference_density = 0.0;
  int revision = 0;
  bool cached = false;
};

struct MutationResult {
  Annotation annotation;
  bool timed_out = false;  // refine only
};

// Review state of one annotated scene. Mutations are serialized; readers see
// whole annotations from before or after a mutation, never a mix.
class ReviewSession {
 public:
  ReviewSession(Scene scene, AnnotationSet initial, std::shared_ptr<const CadDatabase> database,
                ReviewConfig config = {});

  const std::string& scene_id() const { return scene_.scene_id; }

  std::vector<AnnotationSummary> list() const;
  Annotation get(const std::string& instance_id) const;
  AnnotationSet snapshot() const;
  // The store without removed annotations.
  AnnotationSet export_set() const;
  std::vector<JournalEntry> journal() const;
  const AnnotationSet& initial() const { return initial_; }

  // Each mutation checks `expected_revision` (when given) against the
  // annotation's revision and throws Error(conflict) on mismatch.
  MutationResult rotate(const std::string& instance_id, int degrees, std::optional<int> expected_revision = {});
  MutationResult swap(const std::string& instance_id, const std::string& cad_id, bool override_class = false,
                      std::optional<int> expected_revision = {});
  MutationResult refine(const std::string& instance_id, std::optional<int> expected_revision = {});
  MutationResult set_status(const std::string& instance_id, Status status, std::optional<int> expected_revision = {});

  // Throws Error(invalid_argument) for an out-of-range view.
  Overlay overlay(const std::string& instance_id, std::size_t view, bool raw = false) const;

  // Re-applies `journal` to `initial`; throws Error(invalid_state) when an
  // entry's recorded revision is not reproduced.
  static AnnotationSet replay(const AnnotationSet& initial, const std::vector<JournalEntry>& journal,
                              const Scene& scene, const CadDatabase& database, const ReviewConfig& config = {});

 private:
  struct Applied {
    Annotation annotation;
    JournalEntry entry;
    bool timed_out = false;
  };

  MutationResult commit(Applied applied);
  Annotation current(const std::string& instance_id) const;

  Scene scene_;
  AnnotationSet initial_;
  std::shared_ptr<const CadDatabase> database_;
  ReviewConfig config_;

  std::mutex write_mutex_;
  mutable std::shared_mutex store_mutex_;
  AnnotationSet store_;
  std::vector<JournalEntry> journal_;

  struct OverlayKey {
    std::string instance_id;
    std::size_t view;
    int revision;
    bool raw;
    auto operator<=>(const OverlayKey&) const = default;
  };
  mutable std::mutex cache_mutex_;
  mutable std::map<OverlayKey, Overlay> cache_;
};

// Encodes 8-bit (`bit_depth` 8) or 16-bit grayscale rows into a PNG.
std::string encode_png_gray(int width, int height, int bit_depth, const std::vector<std::uint16_t>& pixels);

// Annotation ids on the wire are "<scene_id>:<instance_id>".
std::string annotation_wire_id(const std::string& scene_id, const std::string& instance_id);
// Throws Error(invalid_argument) when the id has no scene part.
std::pair<std::string, std::string> split_wire_id(const std::string& id);

class ReviewService {
 public:
  explicit ReviewService(std::shared_ptr<const CadDatabase> database) : database_(std::move(database)) {}

  // Throws Error(invalid_argument) on a duplicate or malformed scene id.
  ReviewSession& add_scene(Scene scene, AnnotationSet annotations, ReviewConfig config = {});
  std::vector<std::string> scene_ids() const;
  // Throws Error(not_found).
  ReviewSession& session(const std::string& scene_id);
  const ReviewSession& session(const std::string& scene_id) const;
  const CadDatabase& database() const { return *database_; }

 private:
  std::shared_ptr<const CadDatabase> database_;
  std::map<std::string, std::unique_ptr<ReviewSession>> sessions_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::optional<std::string> token;  // required as "Authorization: Bearer <token>" when set
};

// Blocking HTTP server; `on_ready` receives the bound port.
class ReviewServer {
 public:
  ReviewServer(ReviewService& service, ServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds and serves until stop(); returns false if binding failed.
  bool listen();
  // Binds only; serve with listen_after_bind(). Returns the port or -1.
  int bind();
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cadfit
