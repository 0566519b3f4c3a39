#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orsearch/core.hpp"
#include "orsearch/dataset.hpp"
#include "orsearch/parallel.hpp"
#include "orsearch/ranking.hpp"
#include "orsearch/similarity.hpp"

namespace orsearch {

struct RankOptions {
  ScoringMode mode = ScoringMode::VisualOR;
  bool exclude_probe_frame = true;
  std::size_t gallery_size = 0;  // 0 = rank against the full gallery
  std::uint64_t seed = 1;        // subset sampling seed (gallery_size > 0)
  std::size_t top_k = 0;         // 0 = keep full lists
  double min_neighbor_det_score = 0.0;  // optional neighbor filter, off by default
  unsigned threads = 1;
};

/// Ranks every probe in `probe_ids` against the dataset gallery (or a
/// seeded subset per probe). Normalized embeddings are computed once and
/// shared; probes run on a worker pool, and the output order follows
/// probe_ids regardless of scheduling.
inline std::vector<RankedList> rank_probes(const Dataset& ds,
                                           const std::vector<std::string>& probe_ids,
                                           const RankOptions& opts) {
  const GalleryNormCache cache(ds.items);
  std::vector<RankedList> results(probe_ids.size());
  parallel_for(probe_ids.size(), opts.threads, [&](std::size_t p) {
    ProbeContext ctx = build_probe_context(ds, probe_ids[p]);
    if (opts.min_neighbor_det_score > 0.0) {
      std::erase_if(ctx.neighbors, [&](const GalleryItem& n) {
        return n.det_score < opts.min_neighbor_det_score;
      });
    }
    std::vector<std::size_t> candidates;
    if (opts.gallery_size > 0) {
      const GallerySubset subset =
          sample_gallery_subset(ds, probe_ids[p], opts.gallery_size, opts.seed);
      candidates.reserve(subset.gallery_item_ids.size());
      for (const std::string& id : subset.gallery_item_ids) {
        candidates.push_back(ds.index_by_id.at(id));
      }
    } else {
      candidates.reserve(ds.items.size());
      for (std::size_t j = 0; j < ds.items.size(); ++j) {
        if (opts.exclude_probe_frame &&
            ds.items[j].frame_id == ctx.probe.frame_id) {
          continue;
        }
        candidates.push_back(j);
      }
    }
    const NormalizedQuerySet queries(ctx);
    RankedList list =
        rank_indexed(queries, ctx.probe.item_id, ds.items, candidates, cache, opts.mode);
    if (opts.top_k > 0) {
      list = truncate_top_k(list, opts.top_k);
    }
    results[p] = std::move(list);
  });
  return results;
}

}  // namespace orsearch
