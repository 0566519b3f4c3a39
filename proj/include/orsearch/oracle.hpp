#pragma once

// Brute-force reference implementations used to cross-check the ranking
// and evaluation pipelines. Everything here is deliberately straight-line
// scalar code with no shared caches or intermediate reuse; it re-derives
// each quantity from the definitions alone.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "orsearch/core.hpp"
#include "orsearch/dataset.hpp"
#include "orsearch/ranking.hpp"

namespace orsearch::oracle {

namespace detail {

// Same pinned sixteen-lane accumulation order as the engine, written out
// independently over the raw float values.
inline double plain_dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s[16] = {0.0};
  std::size_t i = 0;
  for (; i + 16 <= a.size(); i += 16) {
    for (int k = 0; k < 16; ++k) {
      s[k] += static_cast<double>(a[i + k]) * static_cast<double>(b[i + k]);
    }
  }
  for (; i < a.size(); ++i) {
    s[0] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return (((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]))) +
         (((s[8] + s[9]) + (s[10] + s[11])) +
          ((s[12] + s[13]) + (s[14] + s[15])));
}

inline std::vector<float> plain_normalize(const std::vector<float>& v) {
  const double norm = std::sqrt(plain_dot(v, v));
  if (norm < 1e-12) {
    fail(ErrorCode::ZeroVector, "oracle: zero vector");
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  }
  return out;
}

inline double cosine(const GalleryItem& a, const GalleryItem& b) {
  return plain_dot(plain_normalize(a.embedding.values),
                   plain_normalize(b.embedding.values));
}

}  // namespace detail

/// Reference ranking: renormalizes and rescores from scratch for every
/// (query, item) pair. Must agree with rank_gallery bit for bit.
inline RankedList brute_force_rank(const ProbeContext& probe_ctx,
                                   const std::vector<GalleryItem>& gallery,
                                   ScoringMode mode,
                                   bool exclude_probe_frame = true) {
  RankedList out;
  out.probe_id = probe_ctx.probe.item_id;
  out.mode = mode;
  for (const GalleryItem& item : gallery) {
    if (exclude_probe_frame && item.frame_id == probe_ctx.probe.frame_id) {
      continue;
    }
    ScoreBreakdown sb;
    sb.visual = detail::cosine(probe_ctx.probe, item);
    sb.objectness = 1.0;
    sb.repulsion = 1.0;
    sb.gap = 0.0;
    sb.nearest_query_index = 0;
    if (mode == ScoringMode::VisualO || mode == ScoringMode::VisualOR) {
      if (!(item.det_score >= 0.0 && item.det_score <= 1.0)) {
        fail(ErrorCode::OutOfRange, "oracle: det_score outside [0,1]");
      }
      sb.objectness = std::exp(item.det_score - 1.0);
    }
    if (mode == ScoringMode::VisualR || mode == ScoringMode::VisualOR) {
      double best = sb.visual;
      std::size_t best_index = 0;
      for (std::size_t i = 0; i < probe_ctx.neighbors.size(); ++i) {
        const double s = detail::cosine(probe_ctx.neighbors[i], item);
        if (s > best) {
          best = s;
          best_index = i + 1;
        }
      }
      if (best <= kRepulsionDenominatorEps) {
        sb.repulsion = 1.0;
        sb.gap = 0.0;
        sb.nearest_query_index = 0;
      } else {
        sb.gap = sb.visual - best;
        sb.repulsion = std::exp(sb.gap / best);
        sb.nearest_query_index = best_index;
      }
    }
    sb.combined = sb.visual * sb.repulsion * sb.objectness;
    out.entries.push_back({item.item_id, sb});
  }
  if (out.entries.empty()) {
    fail(ErrorCode::EmptyGallery, "oracle: empty gallery after exclusion");
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.score.combined != b.score.combined) {
                return a.score.combined > b.score.combined;
              }
              return a.item_id < b.item_id;
            });
  return out;
}

/// Reference hit flags for one ranked list: greedy claims in rank order,
/// one claim per ground-truth box.
inline std::vector<bool> brute_force_hits(const RankedList& list,
                                          const Dataset& ds,
                                          const std::string& target_person,
                                          double iou_threshold) {
  std::vector<bool> hits;
  std::set<std::string> used_frames;
  for (const RankedEntry& e : list.entries) {
    const GalleryItem& item = ds.item(e.item_id);
    const auto fit = ds.frames.find(item.frame_id);
    if (fit == ds.frames.end()) {
      fail(ErrorCode::UnknownFrame, "oracle: unknown frame " + item.frame_id);
    }
    bool hit = false;
    for (const GtBox& g : fit->second.gt) {
      if (g.person_id != target_person) {
        continue;
      }
      const double ix = std::max(item.bbox.x, g.bbox.x);
      const double iy = std::max(item.bbox.y, g.bbox.y);
      const double ix2 = std::min(item.bbox.x + item.bbox.w, g.bbox.x + g.bbox.w);
      const double iy2 = std::min(item.bbox.y + item.bbox.h, g.bbox.y + g.bbox.h);
      double v = 0.0;
      if (ix2 > ix && iy2 > iy) {
        const double inter = (ix2 - ix) * (iy2 - iy);
        v = inter /
            (item.bbox.w * item.bbox.h + g.bbox.w * g.bbox.h - inter);
      }
      if (v >= iou_threshold && used_frames.count(item.frame_id) == 0) {
        hit = true;
        used_frames.insert(item.frame_id);
      }
      break;  // one ground-truth box per (frame, person)
    }
    hits.push_back(hit);
  }
  return hits;
}

/// Reference AP: recomputes precision at every hit position by rescanning
/// the prefix.
inline double brute_force_ap(const std::vector<bool>& hits, std::size_t num_gt) {
  double sum = 0.0;
  for (std::size_t p = 0; p < hits.size(); ++p) {
    if (!hits[p]) {
      continue;
    }
    std::size_t correct = 0;
    for (std::size_t q = 0; q <= p; ++q) {
      if (hits[q]) {
        ++correct;
      }
    }
    sum += static_cast<double>(correct) / static_cast<double>(p + 1);
  }
  return sum / static_cast<double>(num_gt);
}

/// Reference mAP over ranked lists, re-deriving hit flags and the
/// ground-truth denominator (frames spanned by the list that contain the
/// target person) from scratch. Probes with a zero denominator are skipped.
inline double brute_force_map(const std::vector<RankedList>& ranked,
                              const Dataset& ds,
                              double iou_threshold = 0.5) {
  std::vector<const RankedList*> ordered;
  for (const RankedList& r : ranked) {
    ordered.push_back(&r);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const RankedList* a, const RankedList* b) {
              return a->probe_id < b->probe_id;
            });
  double sum = 0.0;
  std::size_t n = 0;
  for (const RankedList* list : ordered) {
    const GalleryItem& probe = ds.item(list->probe_id);
    if (!probe.person_id) {
      continue;
    }
    std::set<std::string> frames;
    for (const RankedEntry& e : list->entries) {
      frames.insert(ds.item(e.item_id).frame_id);
    }
    std::size_t num_gt = 0;
    for (const std::string& fid : frames) {
      for (const GtBox& g : ds.frames.at(fid).gt) {
        if (g.person_id == *probe.person_id) {
          ++num_gt;
          break;
        }
      }
    }
    if (num_gt == 0) {
      continue;
    }
    sum += brute_force_ap(
        brute_force_hits(*list, ds, *probe.person_id, iou_threshold), num_gt);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Reference CMC top-k over ranked lists, same skipping rule as
/// brute_force_map.
inline double brute_force_cmc(const std::vector<RankedList>& ranked,
                              const Dataset& ds, std::size_t k,
                              double iou_threshold = 0.5) {
  std::size_t n = 0;
  std::size_t matched = 0;
  for (const RankedList& list : ranked) {
    const GalleryItem& probe = ds.item(list.probe_id);
    if (!probe.person_id) {
      continue;
    }
    std::set<std::string> frames;
    for (const RankedEntry& e : list.entries) {
      frames.insert(ds.item(e.item_id).frame_id);
    }
    bool has_gt = false;
    for (const std::string& fid : frames) {
      for (const GtBox& g : ds.frames.at(fid).gt) {
        if (g.person_id == *probe.person_id) {
          has_gt = true;
        }
      }
    }
    if (!has_gt) {
      continue;
    }
    ++n;
    const std::vector<bool> hits =
        brute_force_hits(list, ds, *probe.person_id, iou_threshold);
    for (std::size_t i = 0; i < std::min(k, hits.size()); ++i) {
      if (hits[i]) {
        ++matched;
        break;
      }
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(n);
}

struct DetectionOracleResult {
  double ap = 0.0;
  double recall = 0.0;
};

/// Reference detection AP/recall: identity-blind greedy matching in
/// detection-score order.
inline DetectionOracleResult brute_force_detection(
    const std::vector<GalleryItem>& detections, const Dataset& ds,
    double iou_threshold = 0.5) {
  std::vector<const GalleryItem*> ordered;
  for (const GalleryItem& d : detections) {
    ordered.push_back(&d);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const GalleryItem* a, const GalleryItem* b) {
              if (a->det_score != b->det_score) {
                return a->det_score > b->det_score;
              }
              return a->item_id < b->item_id;
            });
  std::map<std::string, std::vector<bool>> claimed;
  std::size_t num_gt = 0;
  for (const auto& [fid, frame] : ds.frames) {
    claimed[fid].assign(frame.gt.size(), false);
    num_gt += frame.gt.size();
  }
  std::vector<bool> hits;
  std::size_t matched = 0;
  for (const GalleryItem* d : ordered) {
    const Frame& frame = ds.frames.at(d->frame_id);
    double best_iou = 0.0;
    std::size_t best = frame.gt.size();
    for (std::size_t g = 0; g < frame.gt.size(); ++g) {
      if (claimed[d->frame_id][g]) {
        continue;
      }
      const BBox& a = d->bbox;
      const BBox& b = frame.gt[g].bbox;
      const double ix = std::max(a.x, b.x);
      const double iy = std::max(a.y, b.y);
      const double ix2 = std::min(a.x + a.w, b.x + b.w);
      const double iy2 = std::min(a.y + a.h, b.y + b.h);
      double v = 0.0;
      if (ix2 > ix && iy2 > iy) {
        const double inter = (ix2 - ix) * (iy2 - iy);
        v = inter / (a.w * a.h + b.w * b.h - inter);
      }
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < frame.gt.size() && best_iou >= iou_threshold) {
      claimed[d->frame_id][best] = true;
      hits.push_back(true);
      ++matched;
    } else {
      hits.push_back(false);
    }
  }
  DetectionOracleResult r;
  r.ap = hits.empty() ? 0.0 : brute_force_ap(hits, num_gt);
  r.recall = static_cast<double>(matched) / static_cast<double>(num_gt);
  return r;
}

}  // namespace orsearch::oracle
