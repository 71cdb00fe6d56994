#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rva/phantom.hpp"
#include "rva/rigid_transform.hpp"
#include "rva/rng.hpp"

namespace rva {

/// Device settings. Each one has a defined effect on the synthetic image:
/// gain sets the tissue grey level, dynamic range the grey levels per dB,
/// enhancement the number of sharpening passes, the grayscale map a gamma
/// curve, frame correlation the temporal averaging window, and the operating
/// frequency the speckle grain size.
struct UsConfig {
  double gain_db = 80.0;
  double depth_cm = 1.6;
  double dynamic_range_db = 80.0;
  double frequency_mhz = 14.2;
  double probe_frequency_mhz = 12.4;
  int enhancement_level = 3;
  int grayscale_map = 14;
  int frame_correlation = 2;
  double resolution_mm_per_px = 0.1;
  double width_mm = 25.6;
  /// Exponent applied to the unit-mean Rayleigh speckle amplitude; 1 is fully
  /// developed speckle, larger values widen its log-domain spread.
  double speckle_scale = 1.0;
  /// Gaussian error (per axis) added to the detected lumen centre before
  /// aiming. The default is calibrated against the rat-tail success rate.
  double detection_sigma_mm = 0.13;

  int rows() const;
  int cols() const;
  /// Throws ValidationError naming the first offending "us.*" key.
  void validate() const;
  bool operator==(const UsConfig&) const = default;
};

/// 8-bit short-axis B-mode frame. Image coordinates are millimetres from the
/// top-left corner: x lateral (columns), y depth (rows).
struct UltrasoundFrame {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;
  /// Probe face pose the frame was acquired at.
  RigidTransform origin;
  double mm_per_px = 0.1;
  std::int64_t frame_index = 0;

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * cols + col]; }
  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * cols + col]; }
  double width_mm() const { return cols * mm_per_px; }
  double depth_mm() const { return rows * mm_per_px; }

  bool operator==(const UltrasoundFrame& other) const {
    return rows == other.rows && cols == other.cols && pixels == other.pixels && mm_per_px == other.mm_per_px &&
           frame_index == other.frame_index;
  }
};

struct Detection {
  /// Continuous pixel coordinates (column, row); pixel (c, r) spans [c, c+1).
  Vec2 center_px = Vec2::Zero();
  /// center_px · mm_per_px.
  Vec2 center_mm = Vec2::Zero();
  double diameter_mm = 0.0;
  double confidence = 0.0;
};

/// Image-coordinate position (mm) of a point given in probe-plane coordinates
/// (lateral, depth) relative to the probe face centre.
Vec2 plane_to_image_mm(const UltrasoundFrame& frame, const Vec2& lateral_depth);

/// Base-frame position of an image-coordinate point.
Vec3 image_to_world(const UltrasoundFrame& frame, const Vec2& image_mm);

/// Synthetic frame: Rayleigh speckle background, anechoic lumens at the
/// ground-truth cross-sections and 1 px hyperechoic walls. With `prev`, the
/// output is (prev·(c−1) + fresh)/c for c = frame_correlation. Throws
/// NoIntersection when the imaging rectangle misses the block.
UltrasoundFrame render_frame(const TissueBlock& block, const RigidTransform& probe_pose, const UsConfig& cfg,
                             Rng& rng, const UltrasoundFrame* prev = nullptr);

/// Half-thickness of the slab around the image plane in which the needle tip
/// is visible.
inline constexpr double kNeedleSlabMm = 0.5;

/// Superimposes the needle tip as a saturating Gaussian spot (σ = 2 px, peak
/// 255) when `tip_world` lies within the imaging slab; otherwise a copy.
UltrasoundFrame render_needle(const UltrasoundFrame& frame, const std::optional<Vec3>& tip_world);

/// Contrast-to-noise ratio |μ_lumen − μ_background| / σ_background of the
/// detected dark blob, from the pixels alone. 0 when no blob is found.
double quality_score(const UltrasoundFrame& frame);

/// Dark-blob lumen detector. Throws NoVesselDetected.
Detection detect_vessel(const UltrasoundFrame& frame);

/// Brightest saturated spot (> 250), if any.
std::optional<Detection> detect_needle_tip(const UltrasoundFrame& frame);

/// Binary P5 PGM with a "# mm_per_px=<v> frame_index=<n>" comment line.
void write_pgm(const UltrasoundFrame& frame, const std::string& path);
UltrasoundFrame read_pgm(const std::string& path);

/// Plain greyscale PGM without calibration metadata.
void write_pgm(int rows, int cols, const std::vector<std::uint8_t>& pixels, const std::string& path);

}  // namespace rva
