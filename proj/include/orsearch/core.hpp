#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace orsearch {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. Codes map onto process exit codes in the CLI:
// data-format problems -> 3, internal invariant violations -> 4,
// everything else (validation / bad arguments) -> 2.
enum class ErrorCode {
  ZeroVector,
  DimensionMismatch,
  OutOfRange,
  EmptyRow,
  EmptyGallery,
  InvalidK,
  InvalidArgument,
  UnknownFrame,
  UnknownProbe,
  UnknownItem,
  NoGroundTruth,
  SizeTooLarge,
  FormatError,
  CountMismatch,
  DanglingFrameRef,
  DimensionZero,
  ConfigError,
  IoError,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

  bool is_data_error() const {
    switch (code_) {
      case ErrorCode::FormatError:
      case ErrorCode::CountMismatch:
      case ErrorCode::DanglingFrameRef:
      case ErrorCode::DimensionZero:
      case ErrorCode::IoError:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

/// Fixed-dimension feature vector for one detection. Stored unnormalized;
/// callers normalize at similarity time.
struct Embedding {
  std::vector<float> values;

  Embedding() = default;
  explicit Embedding(std::vector<float> v) : values(std::move(v)) {}

  std::size_t dim() const { return values.size(); }
  const float* data() const { return values.data(); }
};

// Dot product with a pinned accumulation order: every product is
// double(a_i) * double(b_i), accumulated into 16 interleaved double lanes
// (lane k takes elements with i % 16 == k in index order; any remainder
// past the last full block goes to lane 0 in order), then reduced as
//
//   (((s0+s1)+(s2+s3)) + ((s4+s5)+(s6+s7)))
// + (((s8+s9)+(s10+s11)) + ((s12+s13)+(s14+s15)))
//
// Since widening a float to double is exact, inputs may be pre-widened and
// still give bit-identical results; every scoring path in this library and
// every independent reimplementation (oracles, other-language ports) must
// follow this order so that outputs agree bit for bit.
template <typename A, typename B>
inline double dot_lanes(const A* a, const B* b, std::size_t n) {
  double s[16] = {0.0};
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    for (int k = 0; k < 16; ++k) {
      s[k] += static_cast<double>(a[i + k]) * static_cast<double>(b[i + k]);
    }
  }
  for (; i < n; ++i) {
    s[0] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return (((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]))) +
         (((s[8] + s[9]) + (s[10] + s[11])) +
          ((s[12] + s[13]) + (s[14] + s[15])));
}

inline double dot(const float* a, const float* b, std::size_t n) {
  return dot_lanes(a, b, n);
}

/// Same value as dot() on the un-widened inputs; the hot ranking loop keeps
/// the query side pre-widened to skip per-element conversions.
inline double dot_wide(const double* a, const float* b, std::size_t n) {
  return dot_lanes(a, b, n);
}

inline double dot(const Embedding& a, const Embedding& b) {
  return dot(a.values.data(), b.values.data(), a.values.size());
}

inline double squared_norm(const Embedding& v) { return dot(v, v); }

/// Scales `v` to unit Euclidean length. Throws ZeroVector when the norm is
/// below 1e-12.
inline Embedding l2_normalize(const Embedding& v) {
  const double norm = std::sqrt(squared_norm(v));
  if (norm < 1e-12) {
    fail(ErrorCode::ZeroVector, "l2_normalize: vector norm below 1e-12");
  }
  Embedding out;
  out.values.resize(v.values.size());
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    out.values[i] = static_cast<float>(static_cast<double>(v.values[i]) / norm);
  }
  return out;
}

/// Axis-aligned box, (x, y) top-left corner, extents (w, h), all in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }
};

/// Intersection-over-union of two boxes. Returns 0 for disjoint boxes,
/// exactly 1 for identical ones; symmetric in its arguments. Areas are
/// derived from the same edge coordinates as the intersection, which is
/// what makes the identity case exact.
inline double iou(const BBox& a, const BBox& b) {
  const double ax2 = a.x + a.w;
  const double ay2 = a.y + a.h;
  const double bx2 = b.x + b.w;
  const double by2 = b.y + b.h;
  const double iw = std::min(ax2, bx2) - std::max(a.x, b.x);
  const double ih = std::min(ay2, by2) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) {
    return 0.0;
  }
  const double inter = iw * ih;
  const double area_a = (ax2 - a.x) * (ay2 - a.y);
  const double area_b = (bx2 - b.x) * (by2 - b.y);
  return inter / (area_a + area_b - inter);
}

/// One auto-detected person proposal. `person_id` is ground-truth linkage
/// and is absent for distractor detections.
struct GalleryItem {
  std::string item_id;
  std::string frame_id;
  BBox bbox;
  double det_score = 0.0;  // in [0,1]
  Embedding embedding;
  std::optional<std::string> person_id;
};

/// A probe detection together with the other detections from its frame.
/// Index 0 of the implied query set is the probe; neighbors follow in
/// ascending item_id order. All share one frame_id and the probe is never
/// among the neighbors.
struct ProbeContext {
  GalleryItem probe;
  std::vector<GalleryItem> neighbors;

  std::size_t num_neighbors() const { return neighbors.size(); }
};

struct GtBox {
  BBox bbox;
  std::string person_id;
};

/// Ground truth for one frame. person_ids are pairwise distinct within a
/// frame: the same person cannot appear twice in one image.
struct Frame {
  std::string frame_id;
  std::vector<GtBox> gt;
};

}  // namespace orsearch
