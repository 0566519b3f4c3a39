#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "orsearch/core.hpp"
#include "orsearch/similarity.hpp"

namespace orsearch {

struct RankedEntry {
  std::string item_id;
  ScoreBreakdown score;
};

/// Gallery ranking for one probe: entries sorted by combined score
/// descending, ties broken by ascending item_id. The order is a total
/// order, so serialized output is reproducible byte for byte.
struct RankedList {
  std::string probe_id;
  ScoringMode mode = ScoringMode::Visual;
  std::vector<RankedEntry> entries;
};

/// Normalized embeddings for a fixed item vector, computed once into one
/// contiguous matrix and shared read-only across probes. Slots outside
/// `subset` stay zero-filled.
class GalleryNormCache {
 public:
  explicit GalleryNormCache(const std::vector<GalleryItem>& items) {
    init(items);
    for (std::size_t j = 0; j < items.size(); ++j) {
      fill(items, j);
    }
  }

  GalleryNormCache(const std::vector<GalleryItem>& items,
                   const std::vector<std::size_t>& subset) {
    init(items);
    for (std::size_t j : subset) {
      fill(items, j);
    }
  }

  const float* row(std::size_t idx) const { return matrix_.data() + idx * dim_; }
  std::size_t dim() const { return dim_; }

 private:
  void init(const std::vector<GalleryItem>& items) {
    dim_ = items.empty() ? 0 : items.front().embedding.dim();
    matrix_.assign(items.size() * dim_, 0.0f);
  }

  void fill(const std::vector<GalleryItem>& items, std::size_t j) {
    if (items[j].embedding.dim() != dim_) {
      return;  // dimension mismatches surface with item context at rank time
    }
    try {
      const Embedding n = l2_normalize(items[j].embedding);
      std::copy(n.values.begin(), n.values.end(), matrix_.begin() + j * dim_);
    } catch (const Error& e) {
      fail(e.code(), "item " + items[j].item_id + ": " + e.what());
    }
  }

  std::vector<float> matrix_;  // items x dim, row-major
  std::size_t dim_ = 0;
};

/// Ranks the candidate subset of `items` for one probe using cached
/// normalized embeddings. All ranking paths funnel through here so that
/// cached and uncached calls produce bit-identical lists.
inline RankedList rank_indexed(const NormalizedQuerySet& queries,
                               const std::string& probe_id,
                               const std::vector<GalleryItem>& items,
                               const std::vector<std::size_t>& candidates,
                               const GalleryNormCache& cache,
                               ScoringMode mode) {
  if (candidates.empty()) {
    fail(ErrorCode::EmptyGallery, "rank: empty gallery for probe " + probe_id);
  }
  if (cache.dim() != queries.dim()) {
    fail(ErrorCode::DimensionMismatch,
         "rank: gallery dimension " + std::to_string(cache.dim()) +
             " does not match query dimension " + std::to_string(queries.dim()));
  }
  const bool probe_only = !mode_uses_repulsion(mode);
  std::vector<ScoreBreakdown> scores(candidates.size());
  QuerySimilarityRow row;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const GalleryItem& item = items[candidates[c]];
    if (item.embedding.dim() != queries.dim()) {
      fail(ErrorCode::DimensionMismatch,
           "rank: item " + item.item_id + " has dimension " +
               std::to_string(item.embedding.dim()) + ", queries have " +
               std::to_string(queries.dim()));
    }
    queries.fill_row(cache.row(candidates[c]), probe_only, row);
    scores[c] = score_from_row(row, item.det_score, mode);
  }
  // sort light (score, position) keys, then materialize the entries
  std::vector<double> keys(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    keys[c] = scores[c].combined;
  }
  std::vector<std::uint32_t> order(candidates.size());
  for (std::uint32_t c = 0; c < order.size(); ++c) {
    order[c] = c;
  }
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (keys[a] != keys[b]) {
      return keys[a] > keys[b];
    }
    return items[candidates[a]].item_id < items[candidates[b]].item_id;
  });
  RankedList out;
  out.probe_id = probe_id;
  out.mode = mode;
  out.entries.reserve(candidates.size());
  for (const std::uint32_t c : order) {
    out.entries.push_back({items[candidates[c]].item_id, scores[c]});
  }
  return out;
}

/// Scores and ranks `gallery` for one probe. With `exclude_probe_frame`
/// (the standard person-search protocol) items from the probe's own frame
/// are dropped before ranking. The result is a pure function of the
/// gallery as a set: input order never matters.
inline RankedList rank_gallery(const ProbeContext& probe_ctx,
                               const std::vector<GalleryItem>& gallery,
                               ScoringMode mode,
                               bool exclude_probe_frame = true) {
  std::vector<std::size_t> candidates;
  candidates.reserve(gallery.size());
  std::unordered_set<std::string> seen;
  seen.reserve(gallery.size());
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    if (exclude_probe_frame && gallery[j].frame_id == probe_ctx.probe.frame_id) {
      continue;
    }
    if (!seen.insert(gallery[j].item_id).second) {
      fail(ErrorCode::InvalidArgument,
           "rank_gallery: duplicate item_id " + gallery[j].item_id);
    }
    candidates.push_back(j);
  }
  if (candidates.empty()) {
    fail(ErrorCode::EmptyGallery,
         "rank_gallery: no gallery items left after excluding frame " +
             probe_ctx.probe.frame_id);
  }
  const NormalizedQuerySet queries(probe_ctx);
  const GalleryNormCache cache(gallery, candidates);
  return rank_indexed(queries, probe_ctx.probe.item_id, gallery, candidates,
                      cache, mode);
}

/// First min(k, size) entries, order preserved. k must be >= 1.
inline RankedList truncate_top_k(const RankedList& list, std::size_t k) {
  if (k < 1) {
    fail(ErrorCode::InvalidK, "truncate_top_k: k must be >= 1");
  }
  RankedList out;
  out.probe_id = list.probe_id;
  out.mode = list.mode;
  const std::size_t n = std::min(k, list.entries.size());
  out.entries.assign(list.entries.begin(), list.entries.begin() + n);
  return out;
}

/// Floating-point values in ranked-list records carry 9 significant digits.
inline std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// One record per line: probe_id, rank (1-based), item_id, combined,
/// visual, objectness, repulsion, gap, nearest_query_index. Tab-separated
/// UTF-8.
inline void write_ranked_list(std::ostream& os, const RankedList& list) {
  for (std::size_t r = 0; r < list.entries.size(); ++r) {
    const RankedEntry& e = list.entries[r];
    os << list.probe_id << '\t' << (r + 1) << '\t' << e.item_id << '\t'
       << format_score(e.score.combined) << '\t'
       << format_score(e.score.visual) << '\t'
       << format_score(e.score.objectness) << '\t'
       << format_score(e.score.repulsion) << '\t' << format_score(e.score.gap)
       << '\t' << e.score.nearest_query_index << '\n';
  }
}

/// Parses concatenated ranked-list records; a change of probe_id starts a
/// new list. Records do not carry the scoring mode, so the caller supplies
/// one when it matters downstream (evaluation never looks at it).
inline std::vector<RankedList> read_ranked_lists(
    std::istream& is, ScoringMode mode = ScoringMode::Visual) {
  std::vector<RankedList> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) {
        break;
      }
      start = tab + 1;
    }
    if (fields.size() != 9) {
      fail(ErrorCode::FormatError,
           "ranked list line " + std::to_string(line_no) + ": expected 9 fields, got " +
               std::to_string(fields.size()));
    }
    // strtod instead of stod: scores can legitimately underflow into the
    // subnormal range (tiny repulsion times tiny visual) and stod treats
    // that as out_of_range.
    auto parse_score = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || std::isnan(v) ||
          std::isinf(v)) {
        fail(ErrorCode::FormatError, "ranked list line " +
                                         std::to_string(line_no) +
                                         ": bad numeric field '" + s + "'");
      }
      return v;
    };
    RankedEntry entry;
    entry.item_id = fields[2];
    entry.score.combined = parse_score(fields[3]);
    entry.score.visual = parse_score(fields[4]);
    entry.score.objectness = parse_score(fields[5]);
    entry.score.repulsion = parse_score(fields[6]);
    entry.score.gap = parse_score(fields[7]);
    try {
      entry.score.nearest_query_index = std::stoul(fields[8]);
    } catch (const std::exception&) {
      fail(ErrorCode::FormatError,
           "ranked list line " + std::to_string(line_no) + ": bad rank index");
    }
    if (lists.empty() || lists.back().probe_id != fields[0]) {
      lists.push_back(RankedList{fields[0], mode, {}});
    }
    lists.back().entries.push_back(std::move(entry));
  }
  return lists;
}

}  // namespace orsearch
