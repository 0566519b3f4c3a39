#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "orsearch/core.hpp"

namespace orsearch {

// Denominator guard for the repulsion normalization: when even the best
// query-side similarity is at or below this value the term carries no
// information and is fixed to 1.
inline constexpr double kRepulsionDenominatorEps = 1e-6;

/// Ablation modes. Visual is the plain cosine baseline; the O and R
/// variants switch the objectness and repulsion attenuation terms on.
enum class ScoringMode { Visual, VisualO, VisualR, VisualOR };

inline bool mode_uses_objectness(ScoringMode m) {
  return m == ScoringMode::VisualO || m == ScoringMode::VisualOR;
}

inline bool mode_uses_repulsion(ScoringMode m) {
  return m == ScoringMode::VisualR || m == ScoringMode::VisualOR;
}

inline const char* to_string(ScoringMode m) {
  switch (m) {
    case ScoringMode::Visual:
      return "visual";
    case ScoringMode::VisualO:
      return "o";
    case ScoringMode::VisualR:
      return "r";
    case ScoringMode::VisualOR:
      return "or";
  }
  return "?";
}

inline ScoringMode parse_mode(const std::string& s) {
  if (s == "visual") return ScoringMode::Visual;
  if (s == "o") return ScoringMode::VisualO;
  if (s == "r") return ScoringMode::VisualR;
  if (s == "or") return ScoringMode::VisualOR;
  fail(ErrorCode::InvalidArgument,
       "unknown scoring mode '" + s + "' (expected visual|o|r|or)");
}

/// Per (probe, gallery item) scoring record. `combined` is always the
/// product visual * repulsion * objectness, evaluated in that order, with
/// terms a mode omits fixed to 1.
struct ScoreBreakdown {
  double visual = 0.0;
  double objectness = 1.0;
  double repulsion = 1.0;
  double gap = 0.0;
  std::size_t nearest_query_index = 0;  // 0 = the probe itself
  double combined = 0.0;
};

/// Similarities of the whole query set (probe at index 0, then neighbors)
/// against a single gallery item.
using QuerySimilarityRow = std::vector<double>;

/// Cosine similarity of two embeddings after L2 normalization; identical
/// to 1 - ||n(a) - n(b)||^2 / 2. Range [-1, 1], higher is more similar.
inline double visual_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    fail(ErrorCode::DimensionMismatch,
         "visual_similarity: dimension mismatch " + std::to_string(a.dim()) +
             " vs " + std::to_string(b.dim()));
  }
  return dot(l2_normalize(a), l2_normalize(b));
}

/// Detector-confidence attenuation e^(det_score - 1). Maps [0,1] onto
/// [e^-1, 1], strictly increasing, and equals 1 only at full confidence.
inline double objectness_term(double det_score) {
  if (!(det_score >= 0.0 && det_score <= 1.0)) {
    fail(ErrorCode::OutOfRange, "objectness_term: det_score " +
                                    std::to_string(det_score) +
                                    " outside [0,1]");
  }
  return std::exp(det_score - 1.0);
}

struct RepulsionResult {
  double repulsion = 1.0;
  double gap = 0.0;
  std::size_t nearest_query_index = 0;
};

/// Repulsion attenuation for one gallery item given its similarity row.
/// Finds the nearest query image N = argmax_i row[i] (ties to the smallest
/// index, so a probe/neighbor tie favors the probe), takes the gap
/// row[0] - row[N], and returns e^(gap / row[N]). When the probe itself is
/// nearest the result is exactly 1; when row[N] <= 1e-6 the term is
/// defined as 1 with gap 0 and index 0.
inline RepulsionResult repulsion_term(const QuerySimilarityRow& row) {
  if (row.empty()) {
    fail(ErrorCode::EmptyRow, "repulsion_term: empty similarity row");
  }
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[nearest]) {
      nearest = i;
    }
  }
  const double max_sim = row[nearest];
  if (max_sim <= kRepulsionDenominatorEps) {
    return {1.0, 0.0, 0};
  }
  const double gap = row[0] - max_sim;
  // exp underflows to 0 once gap/max_sim drops below about -708; the term
  // is documented as strictly positive, so pin it to the smallest normal.
  const double repulsion =
      std::max(std::exp(gap / max_sim), std::numeric_limits<double>::min());
  return {repulsion, gap, nearest};
}

/// Combines a precomputed similarity row and detection score into a
/// ScoreBreakdown for the given mode. row[0] is the probe similarity and
/// becomes the visual term.
inline ScoreBreakdown score_from_row(const QuerySimilarityRow& row,
                                     double det_score, ScoringMode mode) {
  if (row.empty()) {
    fail(ErrorCode::EmptyRow, "score_from_row: empty similarity row");
  }
  ScoreBreakdown out;
  out.visual = row[0];
  if (mode_uses_objectness(mode)) {
    out.objectness = objectness_term(det_score);
  }
  if (mode_uses_repulsion(mode)) {
    const RepulsionResult r = repulsion_term(row);
    out.repulsion = r.repulsion;
    out.gap = r.gap;
    out.nearest_query_index = r.nearest_query_index;
  }
  out.combined = out.visual * out.repulsion * out.objectness;
  return out;
}

/// Query set (probe + neighbors) with embeddings normalized once and
/// pre-widened to double, reused across a whole gallery scan. Widening is
/// exact, so similarities match a plain float dot bit for bit.
class NormalizedQuerySet {
 public:
  explicit NormalizedQuerySet(const ProbeContext& ctx) {
    const Embedding probe = l2_normalize(ctx.probe.embedding);
    dim_ = probe.dim();
    rows_.reserve((ctx.neighbors.size() + 1) * dim_);
    append(probe);
    for (const GalleryItem& n : ctx.neighbors) {
      if (n.embedding.dim() != dim_) {
        fail(ErrorCode::DimensionMismatch,
             "probe context: neighbor " + n.item_id + " has dimension " +
                 std::to_string(n.embedding.dim()) + ", probe has " +
                 std::to_string(dim_));
      }
      append(l2_normalize(n.embedding));
    }
  }

  std::size_t size() const { return rows_.size() / dim_; }
  std::size_t dim() const { return dim_; }

  /// Similarity row of this query set against one normalized gallery
  /// embedding. With `probe_only` the neighbor entries are skipped (modes
  /// that never look at the repulsion row).
  QuerySimilarityRow row_against(const Embedding& normalized_item,
                                 bool probe_only) const {
    QuerySimilarityRow row;
    fill_row(normalized_item.values.data(), probe_only, row);
    return row;
  }

  /// Same as row_against but reuses the caller's buffer; the hot ranking
  /// loop calls this once per gallery item.
  void fill_row(const float* normalized_item, bool probe_only,
                QuerySimilarityRow& row) const {
    const std::size_t n = probe_only ? 1 : size();
    row.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = dot_wide(rows_.data() + i * dim_, normalized_item, dim_);
    }
  }

 private:
  void append(const Embedding& e) {
    for (const float v : e.values) {
      rows_.push_back(static_cast<double>(v));
    }
  }

  std::vector<double> rows_;  // size() x dim_, row-major
  std::size_t dim_ = 0;
};

/// Scores one gallery item against a probe context. The similarity row is
/// [S(probe,item), S(neighbor_1,item), ...]; terms a mode omits stay 1.
inline ScoreBreakdown or_score(const ProbeContext& probe_ctx,
                               const GalleryItem& item, ScoringMode mode) {
  const NormalizedQuerySet queries(probe_ctx);
  if (item.embedding.dim() != queries.dim()) {
    fail(ErrorCode::DimensionMismatch,
         "or_score: item " + item.item_id + " has dimension " +
             std::to_string(item.embedding.dim()) + ", queries have " +
             std::to_string(queries.dim()));
  }
  const Embedding g = l2_normalize(item.embedding);
  const QuerySimilarityRow row =
      queries.row_against(g, !mode_uses_repulsion(mode));
  return score_from_row(row, item.det_score, mode);
}

/// Batched or_score over a gallery; query-side normalizations are computed
/// once and reused. Element j is bit-identical to
/// or_score(probe_ctx, gallery[j], mode).
inline std::vector<ScoreBreakdown> or_score_matrix(
    const ProbeContext& probe_ctx, const std::vector<GalleryItem>& gallery,
    ScoringMode mode) {
  if (gallery.empty()) {
    fail(ErrorCode::EmptyGallery, "or_score_matrix: empty gallery");
  }
  const NormalizedQuerySet queries(probe_ctx);
  const bool probe_only = !mode_uses_repulsion(mode);
  std::vector<ScoreBreakdown> out;
  out.reserve(gallery.size());
  for (const GalleryItem& item : gallery) {
    try {
      if (item.embedding.dim() != queries.dim()) {
        fail(ErrorCode::DimensionMismatch,
             "dimension " + std::to_string(item.embedding.dim()) +
                 " does not match query dimension " +
                 std::to_string(queries.dim()));
      }
      const Embedding g = l2_normalize(item.embedding);
      out.push_back(
          score_from_row(queries.row_against(g, probe_only), item.det_score, mode));
    } catch (const Error& e) {
      fail(e.code(), "or_score_matrix: item " + item.item_id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace orsearch
