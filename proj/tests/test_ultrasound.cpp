#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rva/errors.hpp"
#include "rva/procedure.hpp"
#include "rva/ultrasound.hpp"

using namespace rva;

namespace {

RigidTransform probe_over(const TissueBlock& block, double lateral_offset_mm = 0.0) {
  const Vec3 mid = block.vessels[0].midpoint();
  RigidTransform pose;
  pose.rotation = probe_rotation();
  pose.translation = Vec3(mid.x() + lateral_offset_mm, mid.y(), block.surface_z());
  return pose;
}

// Expected lumen centre in continuous pixel coordinates.
Vec2 truth_px(const UltrasoundFrame& frame, const TissueBlock& block) {
  const auto sections = cross_section(block, frame.origin);
  REQUIRE(sections.size() == 1);
  return plane_to_image_mm(frame, sections[0].center_mm) / frame.mm_per_px;
}

// Longest run of pixels darker than `level` on the given row.
int dark_run(const UltrasoundFrame& frame, int row, int level) {
  int best = 0;
  int run = 0;
  for (int c = 0; c < frame.cols; ++c) {
    run = frame.at(row, c) < level ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

UsConfig quiet() {
  UsConfig cfg;
  cfg.speckle_scale = 1e-6;
  return cfg;
}

}  // namespace

TEST_SUITE("ultrasound") {

TEST_CASE("image size follows depth, width and resolution") {
  const UsConfig cfg;
  CHECK(cfg.rows() == 160);
  CHECK(cfg.cols() == 256);
  UsConfig bad;
  bad.depth_cm = -1.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("us.depth_cm"), ValidationError);
  bad = UsConfig{};
  bad.grayscale_map = 29;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = UsConfig{};
  bad.frame_correlation = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("lumen spans match the vessel diameter") {
  const TissueBlock phantom = make_phantom_scenario();
  Rng rng(1);
  const UltrasoundFrame big = render_frame(phantom, probe_over(phantom), quiet(), rng);
  const Vec2 c = truth_px(big, phantom);
  CHECK(std::abs(dark_run(big, static_cast<int>(c.y()), 56) - 40) <= 1);

  ScenarioConfig cfg;
  cfg.rat.diameter_sd_mm = 0.0;
  const TissueBlock rat = make_rat_tail_scenario(3, cfg);
  const UltrasoundFrame small = render_frame(rat, probe_over(rat), quiet(), rng);
  const Vec2 cs = truth_px(small, rat);
  CHECK(std::abs(dark_run(small, static_cast<int>(cs.y()), 56) - 7) <= 1);
}

TEST_CASE("tissue level follows gain") {
  const TissueBlock phantom = make_phantom_scenario();
  UsConfig cfg = quiet();
  cfg.enhancement_level = 1;
  Rng rng(2);
  const UltrasoundFrame f = render_frame(phantom, probe_over(phantom), cfg, rng);
  // Far from the lumen the image is the flat tissue level 1.4·gain.
  CHECK(std::abs(f.at(5, 5) - 112) <= 1);
  cfg.gain_db = 60.0;
  const UltrasoundFrame g = render_frame(phantom, probe_over(phantom), cfg, rng);
  CHECK(std::abs(g.at(5, 5) - 84) <= 1);
}

TEST_CASE("detection locates the lumen") {
  const TissueBlock phantom = make_phantom_scenario();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const UltrasoundFrame f = render_frame(phantom, probe_over(phantom, 0.37 * seed - 1.5), UsConfig{}, rng);
    const Detection d = detect_vessel(f);
    CHECK((d.center_px - truth_px(f, phantom)).norm() <= 1.0);
    CHECK(d.diameter_mm == doctest::Approx(4.0).epsilon(0.05));
    CHECK((d.center_mm - d.center_px * f.mm_per_px).norm() < 1e-12);
    CHECK(d.confidence > 0.0);
  }
}

TEST_CASE("detected centre lifts back to the vessel axis") {
  const TissueBlock phantom = make_phantom_scenario();
  Rng rng(4);
  const UltrasoundFrame f = render_frame(phantom, probe_over(phantom, 1.2), UsConfig{}, rng);
  const Vec3 world = image_to_world(f, detect_vessel(f).center_mm);
  CHECK(phantom.vessels[0].distance_to_centerline(world) <= 0.1);
}

TEST_CASE("frame correlation blends with the previous frame") {
  const TissueBlock phantom = make_phantom_scenario();
  const RigidTransform pose = probe_over(phantom);
  UsConfig single;
  single.frame_correlation = 1;
  Rng a(7);
  const UltrasoundFrame prev = render_frame(phantom, pose, single, a);
  Rng b(8);
  const UltrasoundFrame fresh = render_frame(phantom, pose, single, b);
  Rng c(8);
  const UltrasoundFrame with_prev = render_frame(phantom, pose, single, c, &prev);
  CHECK(with_prev.pixels == fresh.pixels);
  CHECK(with_prev.frame_index == prev.frame_index + 1);

  UsConfig triple;
  triple.frame_correlation = 3;
  Rng d(8);
  const UltrasoundFrame blended = render_frame(phantom, pose, triple, d, &prev);
  for (std::size_t i = 0; i < blended.pixels.size(); i += 97) {
    const double expect = (2.0 * prev.pixels[i] + fresh.pixels[i]) / 3.0;
    CHECK(std::abs(blended.pixels[i] - expect) <= 0.5 + 1e-9);
  }
}

TEST_CASE("needle tip is visible only inside the slab") {
  const TissueBlock phantom = make_phantom_scenario();
  const RigidTransform pose = probe_over(phantom);
  Rng rng(5);
  const UltrasoundFrame f = render_frame(phantom, pose, UsConfig{}, rng);
  CHECK(render_needle(f, std::nullopt).pixels == f.pixels);

  // 1 mm lateral, 2 mm deep, 0.3 mm off-plane.
  const Vec3 tip = pose.apply(Vec3(0.3, 1.0, 2.0));
  const UltrasoundFrame with = render_needle(f, tip);
  const auto seen = detect_needle_tip(with);
  REQUIRE(seen.has_value());
  const Vec2 expect_px = plane_to_image_mm(f, Vec2(1.0, 2.0)) / f.mm_per_px;
  CHECK((seen->center_px - expect_px).norm() <= 1.0);

  const Vec3 off = pose.apply(Vec3(kNeedleSlabMm + 0.1, 1.0, 2.0));
  CHECK(render_needle(f, off).pixels == f.pixels);
}

TEST_CASE("uniform frames have no vessel and zero quality") {
  UltrasoundFrame flat;
  flat.rows = 64;
  flat.cols = 64;
  flat.pixels.assign(64 * 64, 112);
  CHECK(quality_score(flat) == 0.0);
  CHECK_THROWS_AS(detect_vessel(flat), NoVesselDetected);
  CHECK_FALSE(detect_needle_tip(flat).has_value());
}

TEST_CASE("noiseless lumen scores against the quantization floor") {
  UltrasoundFrame f;
  f.rows = 64;
  f.cols = 64;
  f.pixels.assign(64 * 64, 112);
  for (int row = 0; row < 64; ++row) {
    for (int col = 0; col < 64; ++col) {
      if (std::hypot(col + 0.5 - 32.0, row + 0.5 - 32.0) <= 6.0) {
        f.at(row, col) = 0;
      }
    }
  }
  CHECK(quality_score(f) == doctest::Approx(112.0 * std::sqrt(12.0)));
  CHECK((detect_vessel(f).center_px - Vec2(32.0, 32.0)).norm() <= 0.5);
}

TEST_CASE("quality gate passes at default settings") {
  const TissueBlock phantom = make_phantom_scenario();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    CHECK(quality_score(render_frame(phantom, probe_over(phantom), UsConfig{}, rng)) > 1.5);
    const TissueBlock rat = make_rat_tail_scenario(seed);
    Rng rng2(seed);
    CHECK(quality_score(render_frame(rat, probe_over(rat), UsConfig{}, rng2)) > 1.5);
  }
}

TEST_CASE("quality decreases as speckle grows") {
  const TissueBlock rat = make_rat_tail_scenario(12);
  double previous = 1e9;
  for (const double scale : {1.0, 1.25, 1.5, 1.75, 2.0}) {
    UsConfig cfg;
    cfg.speckle_scale = scale;
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      Rng rng(seed);
      sum += quality_score(render_frame(rat, probe_over(rat), cfg, rng));
    }
    CHECK(sum / 4 < previous);
    previous = sum / 4;
  }
}

TEST_CASE("plane missing the block throws") {
  const TissueBlock phantom = make_phantom_scenario();
  RigidTransform pose = probe_over(phantom);
  pose.translation.z() += 100.0;
  Rng rng(1);
  CHECK_THROWS_AS(render_frame(phantom, pose, UsConfig{}, rng), NoIntersection);
}

TEST_CASE("rendering is deterministic for a given stream") {
  const TissueBlock rat = make_rat_tail_scenario(2);
  Rng a = make_stream(2, Stream::Imaging);
  Rng b = make_stream(2, Stream::Imaging);
  CHECK(render_frame(rat, probe_over(rat), UsConfig{}, a) == render_frame(rat, probe_over(rat), UsConfig{}, b));
}

TEST_CASE("PGM round trip keeps pixels and metadata") {
  const TissueBlock phantom = make_phantom_scenario();
  Rng rng(9);
  UltrasoundFrame f = render_frame(phantom, probe_over(phantom), UsConfig{}, rng);
  f.frame_index = 17;
  f.mm_per_px = 0.1 + 1e-13;
  const auto path = std::filesystem::temp_directory_path() / "rva_us_roundtrip.pgm";
  write_pgm(f, path.string());
  const UltrasoundFrame back = read_pgm(path.string());
  CHECK(back == f);

  std::ofstream(path, std::ios::binary) << "P2\n2 2\n255\n0 0 0 0\n";
  CHECK_THROWS_AS(read_pgm(path.string()), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_pgm(path.string()), IoError);
}

}  // TEST_SUITE
