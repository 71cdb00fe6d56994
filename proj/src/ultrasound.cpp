#include "rva/ultrasound.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rva/errors.hpp"

namespace rva {

namespace {

constexpr double kLevelPerGainDb = 1.4;       // tissue grey level per dB of gain
constexpr double kLumenDb = -40.0;            // anechoic blood
constexpr double kWallDb = 8.0;               // hyperechoic vessel wall
constexpr double kReferenceFrequencyMhz = 14.2;
constexpr double kSharpenAmount = 0.3;
constexpr int kSupersample = 4;
constexpr double kNeedleSigmaPx = 2.0;
constexpr int kTipThreshold = 250;

using Plane = std::vector<float>;

struct Ellipse {
  Vec2 center;     // image mm
  Vec2 major_dir;  // unit
  double semi_major = 0.0;
  double semi_minor = 0.0;
};

// Signed distance proxy to the lumen boundary in mm (negative inside).
double boundary_offset(const Ellipse& e, double x, double y) {
  const Vec2 p(x - e.center.x(), y - e.center.y());
  const double u = p.dot(e.major_dir);
  const double v = p.x() * -e.major_dir.y() + p.y() * e.major_dir.x();
  const double rho = std::sqrt((u / e.semi_major) * (u / e.semi_major) + (v / e.semi_minor) * (v / e.semi_minor));
  return (rho - 1.0) * e.semi_minor;
}

// Echo level (dB relative to tissue) of a point.
double sample_echo_db(const std::vector<Ellipse>& lumens, double x, double y, double px) {
  bool wall = false;
  for (const auto& e : lumens) {
    const double off = boundary_offset(e, x, y);
    if (off < 0.0) {
      return kLumenDb;
    }
    wall = wall || off < px;
  }
  return wall ? kWallDb : 0.0;
}

void box3(const Plane& in, Plane& out, int rows, int cols) {
  Plane tmp(in.size());
  out.resize(in.size());
  for (int r = 0; r < rows; ++r) {
    const float* row = &in[static_cast<std::size_t>(r) * cols];
    float* dst = &tmp[static_cast<std::size_t>(r) * cols];
    for (int c = 0; c < cols; ++c) {
      dst[c] = row[std::max(c - 1, 0)] + row[c] + row[std::min(c + 1, cols - 1)];
    }
  }
  for (int r = 0; r < rows; ++r) {
    const float* up = &tmp[static_cast<std::size_t>(std::max(r - 1, 0)) * cols];
    const float* mid = &tmp[static_cast<std::size_t>(r) * cols];
    const float* down = &tmp[static_cast<std::size_t>(std::min(r + 1, rows - 1)) * cols];
    float* dst = &out[static_cast<std::size_t>(r) * cols];
    for (int c = 0; c < cols; ++c) {
      dst[c] = (up[c] + mid[c] + down[c]) / 9.0f;
    }
  }
}

// Separable [1 4 6 4 1]/16 binomial blur (σ ≈ 1 px).
Plane smooth(const std::vector<std::uint8_t>& pixels, int rows, int cols) {
  static constexpr std::array<float, 5> kernel{1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16};
  Plane tmp(pixels.size());
  Plane out(pixels.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      float sum = 0.0f;
      for (int k = -2; k <= 2; ++k) {
        sum += kernel[k + 2] * pixels[static_cast<std::size_t>(r) * cols + std::clamp(c + k, 0, cols - 1)];
      }
      tmp[static_cast<std::size_t>(r) * cols + c] = sum;
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      float sum = 0.0f;
      for (int k = -2; k <= 2; ++k) {
        sum += kernel[k + 2] * tmp[static_cast<std::size_t>(std::clamp(r + k, 0, rows - 1)) * cols + c];
      }
      out[static_cast<std::size_t>(r) * cols + c] = sum;
    }
  }
  return out;
}

double otsu_threshold(const Plane& values) {
  std::array<double, 256> hist{};
  for (float v : values) {
    hist[static_cast<std::size_t>(std::clamp(std::lround(v), 0L, 255L))] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) {
    sum_all += i * hist[i];
  }
  double w0 = 0.0;
  double sum0 = 0.0;
  double best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 <= 0.0 || w1 <= 0.0) {
      continue;
    }
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  // Class 0 is [0, best_t]; pixels strictly below best_t + 0.5 are dark.
  return best < 0.0 ? 0.0 : best_t + 0.5;
}

double median_of(Plane values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

struct Region {
  std::vector<int> members;  // linear pixel indices
  bool touches_border = false;
};

// 4-connected flood fill over `inside` from `seed`, marking `visited`.
template <typename Pred>
Region flood(int seed, int rows, int cols, std::vector<std::uint8_t>& visited, Pred inside) {
  Region region;
  std::vector<int> stack{seed};
  visited[static_cast<std::size_t>(seed)] = 1;
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    region.members.push_back(idx);
    const int r = idx / cols;
    const int c = idx % cols;
    if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) {
      region.touches_border = true;
    }
    const std::array<std::pair<int, int>, 4> nbrs{{{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}}};
    for (const auto& [rr, cc] : nbrs) {
      if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) {
        continue;
      }
      const int n = rr * cols + cc;
      if (!visited[static_cast<std::size_t>(n)] && inside(n)) {
        visited[static_cast<std::size_t>(n)] = 1;
        stack.push_back(n);
      }
    }
  }
  return region;
}

struct Shape {
  Vec2 centroid_px;  // continuous (col, row)
  double area = 0.0;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
};

Shape shape_of(const Region& region, int cols) {
  Shape s;
  s.area = static_cast<double>(region.members.size());
  double sc = 0.0;
  double sr = 0.0;
  for (int idx : region.members) {
    sc += idx % cols;
    sr += idx / cols;
  }
  const double mc = sc / s.area;
  const double mr = sr / s.area;
  double cc = 0.0;
  double rr = 0.0;
  double cr = 0.0;
  for (int idx : region.members) {
    const double dc = idx % cols - mc;
    const double dr = idx / cols - mr;
    cc += dc * dc;
    rr += dr * dr;
    cr += dc * dr;
  }
  // Each pixel is a unit square, adding 1/12 of variance per axis.
  cc = cc / s.area + 1.0 / 12.0;
  rr = rr / s.area + 1.0 / 12.0;
  cr /= s.area;
  const double mean = 0.5 * (cc + rr);
  const double diff = std::sqrt(0.25 * (cc - rr) * (cc - rr) + cr * cr);
  s.lambda_max = mean + diff;
  s.lambda_min = std::max(mean - diff, 1e-12);
  s.centroid_px = Vec2(mc + 0.5, mr + 0.5);
  return s;
}

double circularity(const Shape& s) {
  const double roundness = std::sqrt(s.lambda_min / s.lambda_max);
  const double compactness = s.area / (4.0 * std::numbers::pi * std::sqrt(s.lambda_max * s.lambda_min));
  return roundness * std::min(1.0, compactness);
}

// Minor-axis diameter of a filled ellipse with the region's area and moments.
double minor_diameter_px(const Shape& s) {
  return std::sqrt(4.0 * s.area / std::numbers::pi * std::sqrt(s.lambda_min / s.lambda_max));
}

struct Blob {
  Detection detection;
  double radius_px = 0.0;
};

std::optional<Blob> find_dark_blob(const UltrasoundFrame& frame) {
  const int rows = frame.rows;
  const int cols = frame.cols;
  if (rows < 3 || cols < 3) {
    return std::nullopt;
  }
  const Plane smoothed = smooth(frame.pixels, rows, cols);
  const double tissue = median_of(smoothed);
  Plane deviations(smoothed.size());
  std::transform(smoothed.begin(), smoothed.end(), deviations.begin(),
                 [tissue](float v) { return static_cast<float>(std::abs(v - tissue)); });
  const double spread = 1.4826 * median_of(deviations);
  // Otsu splits the dominant tissue mode when the lumen is tiny; the
  // noise-floor cap keeps the threshold below the speckle.
  const double threshold = std::min(otsu_threshold(smoothed), tissue - 4.0 * spread);
  if (!(tissue > 0.0) || !(threshold > 0.0)) {
    return std::nullopt;
  }

  std::vector<std::uint8_t> visited(smoothed.size(), 0);
  const double min_area = std::numbers::pi * 1.5 * 1.5;
  std::optional<Region> best_region;
  double best_confidence = -1.0;
  double best_floor = 0.0;
  for (int idx = 0; idx < rows * cols; ++idx) {
    if (visited[static_cast<std::size_t>(idx)] || smoothed[static_cast<std::size_t>(idx)] >= threshold) {
      continue;
    }
    Region region = flood(idx, rows, cols, visited,
                          [&](int n) { return smoothed[static_cast<std::size_t>(n)] < threshold; });
    if (region.touches_border || static_cast<double>(region.members.size()) <= min_area) {
      continue;
    }
    double sum = 0.0;
    double floor = 255.0;
    for (int m : region.members) {
      sum += smoothed[static_cast<std::size_t>(m)];
      floor = std::min(floor, static_cast<double>(smoothed[static_cast<std::size_t>(m)]));
    }
    const double mean = sum / static_cast<double>(region.members.size());
    const double contrast = std::clamp((tissue - mean) / tissue, 0.0, 1.0);
    const double confidence = circularity(shape_of(region, cols)) * contrast;
    if (confidence > best_confidence) {
      best_confidence = confidence;
      best_region = std::move(region);
      best_floor = floor;
    }
  }
  if (!best_region) {
    return std::nullopt;
  }

  // Refine at the half level between lumen floor and tissue.
  const double half = 0.5 * (tissue + best_floor);
  int seed = best_region->members.front();
  for (int m : best_region->members) {
    if (smoothed[static_cast<std::size_t>(m)] < smoothed[static_cast<std::size_t>(seed)]) {
      seed = m;
    }
  }
  std::fill(visited.begin(), visited.end(), 0);
  Region refined =
      flood(seed, rows, cols, visited, [&](int n) { return smoothed[static_cast<std::size_t>(n)] < half; });
  const Region& chosen = refined.members.size() >= 3 && !refined.touches_border ? refined : *best_region;
  const Shape shape = shape_of(chosen, cols);

  Blob blob;
  blob.detection.center_px = shape.centroid_px;
  blob.detection.center_mm = shape.centroid_px * frame.mm_per_px;
  blob.detection.diameter_mm = minor_diameter_px(shape) * frame.mm_per_px;
  blob.detection.confidence = std::clamp(best_confidence, 0.0, 1.0);
  blob.radius_px = 0.5 * minor_diameter_px(shape);
  return blob;
}

}  // namespace

int UsConfig::rows() const { return static_cast<int>(std::lround(depth_cm * 10.0 / resolution_mm_per_px)); }
int UsConfig::cols() const { return static_cast<int>(std::lround(width_mm / resolution_mm_per_px)); }

void UsConfig::validate() const {
  const auto positive = [](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(key, "must be positive");
    }
  };
  positive(gain_db, "us.gain_db");
  positive(depth_cm, "us.depth_cm");
  positive(dynamic_range_db, "us.dynamic_range_db");
  positive(frequency_mhz, "us.frequency_mhz");
  positive(probe_frequency_mhz, "us.probe_frequency_mhz");
  positive(resolution_mm_per_px, "us.resolution_mm_per_px");
  positive(width_mm, "us.width_mm");
  positive(speckle_scale, "us.speckle_scale");
  if (enhancement_level < 1) {
    throw ValidationError("us.enhancement_level", "must be positive");
  }
  if (grayscale_map < 1 || grayscale_map > 28) {
    throw ValidationError("us.grayscale_map", "must be in [1, 28]");
  }
  if (frame_correlation < 1) {
    throw ValidationError("us.frame_correlation", "must be positive");
  }
  if (!(detection_sigma_mm >= 0.0) || !std::isfinite(detection_sigma_mm)) {
    throw ValidationError("us.detection_sigma_mm", "must be non-negative");
  }
  const double exact_rows = depth_cm * 10.0 / resolution_mm_per_px;
  if (std::abs(exact_rows - std::round(exact_rows)) > 1.0 || rows() < 8 || cols() < 8) {
    throw ValidationError("us.resolution_mm_per_px", "depth and width must span at least 8 pixels");
  }
}

Vec2 plane_to_image_mm(const UltrasoundFrame& frame, const Vec2& lateral_depth) {
  return Vec2(lateral_depth.x() + 0.5 * frame.width_mm(), lateral_depth.y());
}

Vec3 image_to_world(const UltrasoundFrame& frame, const Vec2& image_mm) {
  return frame.origin.translation + (image_mm.x() - 0.5 * frame.width_mm()) * frame.origin.rotation.col(1) +
         image_mm.y() * frame.origin.rotation.col(2);
}

UltrasoundFrame render_frame(const TissueBlock& block, const RigidTransform& probe_pose, const UsConfig& cfg,
                             Rng& rng, const UltrasoundFrame* prev) {
  cfg.validate();
  const int rows = cfg.rows();
  const int cols = cfg.cols();
  const double px = cfg.resolution_mm_per_px;

  UltrasoundFrame frame;
  frame.rows = rows;
  frame.cols = cols;
  frame.origin = probe_pose;
  frame.mm_per_px = px;
  frame.frame_index = prev ? prev->frame_index + 1 : 0;

  std::vector<Ellipse> lumens;
  for (const auto& section : cross_section(block, probe_pose)) {
    Ellipse e;
    e.center = plane_to_image_mm(frame, section.center_mm);
    e.major_dir = section.major_direction;
    e.semi_major = 0.5 * section.major_axis_mm;
    e.semi_minor = 0.5 * section.diameter_mm;
    lumens.push_back(e);
  }

  const double tissue_level = kLevelPerGainDb * cfg.gain_db;
  const double grey_per_db = 255.0 / cfg.dynamic_range_db;
  const double grain_px = std::max(1.0, kReferenceFrequencyMhz / cfg.frequency_mhz);
  const int grain_cols = static_cast<int>(std::ceil(cols / grain_px));
  const int grain_rows = static_cast<int>(std::ceil(rows / grain_px));

  // Unit-mean Rayleigh amplitude in dB: R² = (4/π)·E with E ~ Exp(1).
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<float> speckle_db(static_cast<std::size_t>(grain_rows) * grain_cols);
  for (auto& s : speckle_db) {
    const double e = -std::log1p(-uniform(rng));
    s = static_cast<float>(10.0 * std::log10(std::max(4.0 / std::numbers::pi * e, 1e-30)));
  }

  const Vec3 lateral = probe_pose.rotation.col(1);
  const Vec3 depth = probe_pose.rotation.col(2);
  Plane image(static_cast<std::size_t>(rows) * cols, 0.0f);
  std::size_t inside_count = 0;
  // The block is convex: if the four image corners are inside, every pixel is.
  bool all_inside = true;
  for (const double cx : {0.0, frame.width_mm()}) {
    for (const double cy : {0.0, frame.depth_mm()}) {
      all_inside = all_inside &&
                   block.extent.contains(probe_pose.translation + (cx - 0.5 * frame.width_mm()) * lateral + cy * depth);
    }
  }
  for (int r = 0; r < rows; ++r) {
    const double y = (r + 0.5) * px;
    for (int c = 0; c < cols; ++c) {
      const double x = (c + 0.5) * px;
      if (!all_inside &&
          !block.extent.contains(probe_pose.translation + (x - 0.5 * frame.width_mm()) * lateral + y * depth)) {
        continue;
      }
      ++inside_count;
      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& e : lumens) {
        // Beyond this box the point is at least 2 px outside the boundary.
        const double reach = e.semi_major * (1.0 + 2.0 * px / e.semi_minor);
        if (std::abs(x - e.center.x()) <= reach && std::abs(y - e.center.y()) <= reach) {
          nearest = std::min(nearest, boundary_offset(e, x, y));
        }
      }
      // Partial-volume pixels are averaged in the display (dB) domain so the
      // half-covered boundary reads halfway between lumen and tissue.
      double echo_db = 0.0;
      if (std::isinf(nearest)) {
        echo_db = 0.0;
      } else if (nearest < -0.75 * px || nearest > 1.75 * px) {
        echo_db = sample_echo_db(lumens, x, y, px);
      } else {
        for (int sy = 0; sy < kSupersample; ++sy) {
          for (int sx = 0; sx < kSupersample; ++sx) {
            const double xs = (c + (sx + 0.5) / kSupersample) * px;
            const double ys = (r + (sy + 0.5) / kSupersample) * px;
            echo_db += sample_echo_db(lumens, xs, ys, px);
          }
        }
        echo_db /= kSupersample * kSupersample;
      }
      const auto cell = static_cast<std::size_t>(static_cast<int>(r / grain_px)) * grain_cols +
                        static_cast<std::size_t>(c / grain_px);
      const double db = echo_db + cfg.speckle_scale * speckle_db[cell];
      image[static_cast<std::size_t>(r) * cols + c] = static_cast<float>(tissue_level + grey_per_db * db);
    }
  }
  if (inside_count == 0) {
    throw NoIntersection("imaging plane does not intersect the tissue block");
  }

  Plane blurred;
  for (int pass = 0; pass < cfg.enhancement_level; ++pass) {
    box3(image, blurred, rows, cols);
    for (std::size_t i = 0; i < image.size(); ++i) {
      image[i] += static_cast<float>(kSharpenAmount) * (image[i] - blurred[i]);
    }
  }

  const double gamma = 0.5 + cfg.grayscale_map / 28.0;
  frame.pixels.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image[i]), 0.0, 255.0) / 255.0;
    const double mapped = gamma == 1.0 ? v : std::pow(v, gamma);
    frame.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * mapped));
  }

  if (prev && cfg.frame_correlation > 1 && prev->rows == rows && prev->cols == cols) {
    const int c = cfg.frame_correlation;
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
      const double blended = (static_cast<double>(prev->pixels[i]) * (c - 1) + frame.pixels[i]) / c;
      frame.pixels[i] = static_cast<std::uint8_t>(std::lround(blended));
    }
  }
  return frame;
}

UltrasoundFrame render_needle(const UltrasoundFrame& frame, const std::optional<Vec3>& tip_world) {
  UltrasoundFrame out = frame;
  if (!tip_world) {
    return out;
  }
  const Vec3 local = frame.origin.inverse().apply(*tip_world);
  if (std::abs(local.x()) > kNeedleSlabMm) {
    return out;
  }
  const Vec2 center_px = plane_to_image_mm(frame, Vec2(local.y(), local.z())) / frame.mm_per_px;
  const int reach = static_cast<int>(std::ceil(4.0 * kNeedleSigmaPx));
  const int c0 = static_cast<int>(std::floor(center_px.x()));
  const int r0 = static_cast<int>(std::floor(center_px.y()));
  for (int r = r0 - reach; r <= r0 + reach; ++r) {
    for (int c = c0 - reach; c <= c0 + reach; ++c) {
      if (r < 0 || c < 0 || r >= out.rows || c >= out.cols) {
        continue;
      }
      const double dx = c + 0.5 - center_px.x();
      const double dy = r + 0.5 - center_px.y();
      const double spot = 255.0 * std::exp(-(dx * dx + dy * dy) / (2.0 * kNeedleSigmaPx * kNeedleSigmaPx));
      out.at(r, c) = static_cast<std::uint8_t>(std::lround(std::min(255.0, out.at(r, c) + spot)));
    }
  }
  return out;
}

double quality_score(const UltrasoundFrame& frame) {
  const auto blob = find_dark_blob(frame);
  if (!blob) {
    return 0.0;
  }
  const Vec2 center = blob->detection.center_px;
  const double r = blob->radius_px;
  const double core = std::max(0.6 * r, 1.0);
  const double ring_inner = r + 3.0;
  const double ring_outer = ring_inner + std::max(6.0, r);
  double core_sum = 0.0;
  std::size_t core_n = 0;
  double ring_sum = 0.0;
  double ring_sq = 0.0;
  std::size_t ring_n = 0;
  const int r_lo = std::max(0, static_cast<int>(center.y() - ring_outer - 1));
  const int r_hi = std::min(frame.rows - 1, static_cast<int>(center.y() + ring_outer + 1));
  const int c_lo = std::max(0, static_cast<int>(center.x() - ring_outer - 1));
  const int c_hi = std::min(frame.cols - 1, static_cast<int>(center.x() + ring_outer + 1));
  for (int row = r_lo; row <= r_hi; ++row) {
    for (int col = c_lo; col <= c_hi; ++col) {
      const double d = std::hypot(col + 0.5 - center.x(), row + 0.5 - center.y());
      const double v = frame.at(row, col);
      if (d <= core) {
        core_sum += v;
        ++core_n;
      } else if (d >= ring_inner && d <= ring_outer) {
        ring_sum += v;
        ring_sq += v * v;
        ++ring_n;
      }
    }
  }
  if (core_n == 0 || ring_n < 2) {
    return 0.0;
  }
  const double mu_core = core_sum / static_cast<double>(core_n);
  const double mu_ring = ring_sum / static_cast<double>(ring_n);
  // Floor at the variance of 8-bit quantization.
  const double var = std::max(1.0 / 12.0, ring_sq / static_cast<double>(ring_n) - mu_ring * mu_ring);
  return std::abs(mu_core - mu_ring) / std::sqrt(var);
}

Detection detect_vessel(const UltrasoundFrame& frame) {
  const auto blob = find_dark_blob(frame);
  if (!blob) {
    throw NoVesselDetected("no dark blob above 3 px diameter");
  }
  return blob->detection;
}

std::optional<Detection> detect_needle_tip(const UltrasoundFrame& frame) {
  const int rows = frame.rows;
  const int cols = frame.cols;
  std::vector<std::uint8_t> visited(frame.pixels.size(), 0);
  std::optional<Detection> best;
  int best_peak = -1;
  double best_mass = -1.0;
  for (int idx = 0; idx < rows * cols; ++idx) {
    if (visited[static_cast<std::size_t>(idx)] || frame.pixels[static_cast<std::size_t>(idx)] <= kTipThreshold) {
      continue;
    }
    const Region region = flood(idx, rows, cols, visited, [&](int n) {
      return frame.pixels[static_cast<std::size_t>(n)] > kTipThreshold;
    });
    int peak = 0;
    double mass = 0.0;
    Vec2 weighted = Vec2::Zero();
    for (int m : region.members) {
      const int v = frame.pixels[static_cast<std::size_t>(m)];
      const double w = v - kTipThreshold;
      peak = std::max(peak, v);
      mass += w;
      weighted += w * Vec2(m % cols + 0.5, m / cols + 0.5);
    }
    if (peak > best_peak || (peak == best_peak && mass > best_mass)) {
      best_peak = peak;
      best_mass = mass;
      Detection d;
      d.center_px = weighted / mass;
      d.center_mm = d.center_px * frame.mm_per_px;
      d.diameter_mm = 2.0 * std::sqrt(static_cast<double>(region.members.size()) / std::numbers::pi) * frame.mm_per_px;
      d.confidence = peak / 255.0;
      best = d;
    }
  }
  return best;
}

}  // namespace rva
