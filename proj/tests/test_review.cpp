#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <functional>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "cadfit/error.hpp"
#include "cadfit/eval.hpp"
#include "review_fixture.hpp"

using namespace cadfit;

namespace {

const ReviewFixture& fixture() {
  static const ReviewFixture f;
  return f;
}

std::optional<ErrorCode> code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("fresh session lists auto annotations; acceptance is isolated") {
  auto s = fixture().session();
  const auto before = s->list();
  REQUIRE(before.size() == 3);
  for (const auto& a : before) {
    CHECK(a.status == Status::auto_);
    CHECK(a.views == 2);
  }
  s->set_status(before[1].instance_id, Status::verified);
  const auto after = s->list();
  CHECK(after[1].status == Status::verified);
  CHECK(after[0].status == Status::auto_);
  CHECK(after[2].status == Status::auto_);
  CHECK(after[1].revision == 1);
  CHECK(after[0].revision == 0);

  ReviewService service(fixture().db);
  service.add_scene(fixture().synth.scene, fixture().initial, fixture().config);
  CHECK(code_of([&] { service.session("nowhere"); }) == ErrorCode::not_found);
  CHECK(code_of([&] { service.add_scene(fixture().synth.scene, fixture().initial, fixture().config); }) ==
        ErrorCode::invalid_argument);
  CHECK(service.scene_ids() == std::vector<std::string>{"room"});
  CHECK(code_of([&] { s->get("ghost"); }) == ErrorCode::not_found);
}

TEST_CASE("four quarter turns restore the pose") {
  auto s = fixture().session();
  const std::string id = fixture().initial.annotations[2].instance_id;
  const Annotation start = s->get(id);
  Annotation now = start;
  for (int i = 0; i < 4; ++i) {
    now = s->rotate(id, 90, now.revision).annotation;
    CHECK(now.status == Status::edited);
    CHECK(now.revision == i + 1);
    CHECK(now.provenance.back().kind == EventKind::manual_rotate);
  }
  CHECK((now.pose.translation - start.pose.translation).norm() < 1e-9);
  CHECK((now.pose.rotation_matrix() - start.pose.rotation_matrix()).norm() < 1e-9);
  CHECK((now.pose.scale - start.pose.scale).norm() < 1e-9);
  CHECK(s->journal().size() == 4);
  CHECK(code_of([&] { s->rotate(id, 45); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { s->rotate(id, 0); }) == ErrorCode::invalid_argument);
  CHECK(s->journal().size() == 4);
}

TEST_CASE("fixing a cabinet that is 180 degrees off") {
  auto s = fixture().session();
  const Annotation& planted = fixture().initial.annotations[0];
  const MutationResult turned = s->rotate(planted.instance_id, 180, 0);
  CHECK(turned.annotation.score.total < planted.score.total);
  const MutationResult refined = s->refine(planted.instance_id, turned.annotation.revision);
  CHECK(refined.annotation.score.total <= turned.annotation.score.total);
  CHECK_FALSE(refined.timed_out);
  CHECK(alignment_correct(refined.annotation, fixture().gt(0)).correct);
  CHECK(refined.annotation.provenance.back().kind == EventKind::refine);
  CHECK(s->journal().back().refine_steps == fixture().config.refine.steps);

  const MutationResult again = s->refine(planted.instance_id, refined.annotation.revision);
  CHECK(again.annotation.score.total <= refined.annotation.score.total);
  CHECK(std::abs(again.annotation.score.total - refined.annotation.score.total) < 1e-6);
}

TEST_CASE("swapping models") {
  auto s = fixture().session();
  const Annotation chair = s->get(fixture().initial.annotations[1].instance_id);
  const MutationResult same = s->swap(chair.instance_id, chair.cad_id);
  CHECK(same.annotation.revision == chair.revision);
  CHECK(same.annotation.status == Status::auto_);
  CHECK(s->journal().size() == 1);
  CHECK(code_of([&] { s->swap(chair.instance_id, "table_000"); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { s->swap(chair.instance_id, "chair_999"); }) == ErrorCode::not_found);
  CHECK(s->journal().size() == 1);

  const MutationResult wrong = s->swap(chair.instance_id, "chair_001");
  CHECK(wrong.annotation.cad_id == "chair_001");
  CHECK(wrong.annotation.status == Status::edited);
  CHECK((wrong.annotation.pose.translation - chair.pose.translation).norm() == 0.0);
  CHECK(wrong.annotation.score.total > chair.score.total);
  const MutationResult back = s->swap(chair.instance_id, "chair_000");
  const MutationResult refined = s->refine(chair.instance_id);
  CHECK(refined.annotation.score.total < wrong.annotation.score.total);
  CHECK(refined.annotation.score.total <= back.annotation.score.total);

  const MutationResult cross = s->swap(chair.instance_id, "table_000", true);
  CHECK(cross.annotation.cad_class == "table");
  CHECK(cross.annotation.class_label == "chair");
}

TEST_CASE("status machine") {
  auto s = fixture().session();
  const std::string a = fixture().initial.annotations[0].instance_id;
  const std::string b = fixture().initial.annotations[1].instance_id;
  CHECK(s->set_status(a, Status::verified).annotation.status == Status::verified);
  CHECK(code_of([&] { s->set_status(a, Status::verified); }) == ErrorCode::invalid_state);
  CHECK(s->set_status(a, Status::removed).annotation.status == Status::removed);
  CHECK(code_of([&] { s->set_status(a, Status::verified); }) == ErrorCode::invalid_state);
  CHECK(code_of([&] { s->refine(a); }) == ErrorCode::invalid_state);
  CHECK(code_of([&] { s->rotate(a, 90); }) == ErrorCode::invalid_state);
  CHECK(code_of([&] { s->swap(a, "cabinet_001"); }) == ErrorCode::invalid_state);
  CHECK(code_of([&] { s->set_status(b, Status::edited); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { s->set_status(b, Status::auto_); }) == ErrorCode::invalid_argument);
  s->rotate(b, 180);
  CHECK(s->set_status(b, Status::verified).annotation.status == Status::verified);

  const AnnotationSet exported = s->export_set();
  CHECK(exported.annotations.size() == 2);
  for (const auto& ann : exported.annotations) CHECK(ann.instance_id != a);
  CHECK(s->snapshot().annotations.size() == 3);
}

TEST_CASE("stale revisions conflict and leave the store untouched") {
  auto s = fixture().session();
  const std::string id = fixture().initial.annotations[2].instance_id;
  s->rotate(id, 90, 0);
  const std::string before = to_json(s->snapshot());
  for (int stale : {0, 2, -1}) {
    CHECK(code_of([&] { s->rotate(id, 90, stale); }) == ErrorCode::conflict);
    CHECK(code_of([&] { s->swap(id, "table_000", false, stale); }) == ErrorCode::conflict);
    CHECK(code_of([&] { s->refine(id, stale); }) == ErrorCode::conflict);
    CHECK(code_of([&] { s->set_status(id, Status::verified, stale); }) == ErrorCode::conflict);
  }
  CHECK(to_json(s->snapshot()) == before);
  CHECK(s->journal().size() == 1);
  CHECK(s->set_status(id, Status::verified, 1).annotation.revision == 2);
}

TEST_CASE("overlays: fit quality, cache and bounds") {
  auto s = fixture().session();
  const std::string good = fixture().initial.annotations[1].instance_id;
  const Overlay o = s->overlay(good, 0);
  CHECK_FALSE(o.cached);
  CHECK(o.difference_density < 0.05);
  CHECK(o.iou > 0.9);
  CHECK(o.png.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
  CHECK(o.width == 96);
  CHECK(o.height == 72);
  CHECK(s->overlay(good, 0).cached);
  CHECK_FALSE(s->overlay(good, 0, true).cached);
  CHECK_FALSE(s->overlay(good, 1).cached);

  s->rotate(good, 180);
  const Overlay bumped = s->overlay(good, 0);
  CHECK_FALSE(bumped.cached);
  CHECK(bumped.revision == 1);
  CHECK(s->overlay(good, 0).cached);

  CHECK(code_of([&] { s->overlay(good, 2); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { s->overlay("ghost", 0); }) == ErrorCode::not_found);

  // Half a metre off: the silhouettes barely overlap.
  AnnotationSet moved = fixture().initial;
  moved.annotations[1].pose.translation += Vec3(0.5, 0.0, 0.0);
  ReviewSession shifted(fixture().synth.scene, moved, fixture().db, fixture().config);
  CHECK(shifted.overlay(good, 0).iou < 0.3);
}

TEST_CASE("journal replays to the same store and survives the file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "cadfit_review_journal.jsonl";
  std::filesystem::remove(path);
  ReviewConfig cfg = fixture().config;
  cfg.refine.steps = 5;
  cfg.journal_file = path;
  ReviewSession s(fixture().synth.scene, fixture().initial, fixture().db, cfg);
  const std::string cab = fixture().initial.annotations[0].instance_id;
  const std::string chair = fixture().initial.annotations[1].instance_id;
  s.rotate(cab, 180);
  s.refine(cab);
  s.swap(chair, "chair_001");
  s.swap(chair, "chair_001");
  s.rotate(chair, 270);
  s.set_status(cab, Status::verified);
  s.set_status(chair, Status::removed);

  const AnnotationSet replayed = ReviewSession::replay(s.initial(), s.journal(), fixture().synth.scene, *fixture().db, cfg);
  CHECK(to_json(replayed) == to_json(s.snapshot()));

  std::vector<JournalEntry> from_file;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) from_file.push_back(JournalEntry::from_json(line));
  REQUIRE(from_file.size() == 7);
  CHECK(to_json(ReviewSession::replay(s.initial(), from_file, fixture().synth.scene, *fixture().db, cfg)) ==
        to_json(s.snapshot()));
  for (std::size_t i = 0; i < from_file.size(); ++i) CHECK(from_file[i].to_json() == s.journal()[i].to_json());

  // A tampered revision is detected.
  auto bad = s.journal();
  bad[1].revision_after += 1;
  CHECK(code_of([&] { ReviewSession::replay(s.initial(), bad, fixture().synth.scene, *fixture().db, cfg); }) ==
        ErrorCode::invalid_state);
  CHECK(code_of([] { JournalEntry::from_json("{\"seq\":1}"); }) == ErrorCode::parse_error);
  CHECK(code_of([] { JournalEntry::from_json("{"); }) == ErrorCode::parse_error);
  std::filesystem::remove(path);
}

TEST_CASE("readers never see a half-applied mutation") {
  auto s = fixture().session();
  const std::string id = fixture().initial.annotations[2].instance_id;
  std::map<int, std::string> committed{{0, annotation_to_json(s->get(id))}};
  std::mutex m;
  std::atomic<bool> done{false};
  std::vector<std::pair<int, std::string>> seen;
  std::thread reader([&] {
    while (!done) {
      const Annotation a = s->get(id);
      const AnnotationSet snap = s->snapshot();
      std::lock_guard lock(m);
      seen.emplace_back(a.revision, annotation_to_json(a));
      seen.emplace_back(snap.find(id)->revision, annotation_to_json(*snap.find(id)));
    }
  });
  for (int i = 0; i < 12; ++i) {
    const Annotation a = s->rotate(id, 90 * (1 + i % 3)).annotation;
    std::lock_guard lock(m);
    committed[a.revision] = annotation_to_json(a);
  }
  done = true;
  reader.join();
  REQUIRE_FALSE(seen.empty());
  for (const auto& [rev, text] : seen) CHECK(committed.at(rev) == text);
}

TEST_CASE("wire ids, png encoding and configuration") {
  CHECK(annotation_wire_id("room", "obj01") == "room:obj01");
  CHECK(split_wire_id("room:obj01") == std::pair<std::string, std::string>{"room", "obj01"});
  CHECK(code_of([] { split_wire_id("obj01"); }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { split_wire_id(":obj01"); }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { split_wire_id("room:"); }) == ErrorCode::invalid_argument);

  const std::string png = encode_png_gray(3, 2, 16, {0, 1000, 65535, 7, 8, 9});
  CHECK(png.substr(1, 3) == "PNG");
  // IHDR: width 3, height 2, bit depth 16, color type 0.
  CHECK(static_cast<unsigned char>(png[19]) == 3);
  CHECK(static_cast<unsigned char>(png[23]) == 2);
  CHECK(static_cast<unsigned char>(png[24]) == 16);
  CHECK(static_cast<unsigned char>(png[25]) == 0);

  ReviewConfig bad;
  bad.refine_timeout = std::chrono::milliseconds(0);
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::invalid_argument);
  AnnotationSet other = fixture().initial;
  other.scene_id = "elsewhere";
  CHECK(code_of([&] { ReviewSession(fixture().synth.scene, other, fixture().db); }) == ErrorCode::invalid_argument);
}
