#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "orsearch/core.hpp"
#include "orsearch/dataset.hpp"
#include "orsearch/ranking.hpp"

namespace orsearch {

inline constexpr double kDefaultIouThreshold = 0.5;

struct ProbeEvalEntry {
  std::string probe_id;
  double ap = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_hits = 0;
};

/// Search-evaluation summary: mAP, CMC at the requested Ks, and the
/// per-probe AP table. cmc is monotone nondecreasing in K and map_score is
/// the arithmetic mean of the per-probe APs.
struct EvalReport {
  double map_score = 0.0;
  std::vector<std::pair<std::size_t, double>> cmc;  // (K, rate), ascending K
  std::vector<ProbeEvalEntry> per_probe;            // ascending probe_id
  std::size_t num_probes = 0;   // evaluated probes
  std::size_t num_skipped = 0;  // probes without any gallery ground truth
  std::vector<std::string> issues;
};

struct DetectionReport {
  double ap = 0.0;
  double recall = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
};

/// Greedy ground-truth matching down a ranked list: entry j is a hit iff
/// item j's box reaches the IoU threshold against a not-yet-claimed
/// ground-truth box of `target_person` in the item's own frame. Claims are
/// made in rank order and each ground-truth box is claimable once.
inline std::vector<bool> match_ranked_list(const RankedList& list,
                                           const Dataset& ds,
                                           const std::string& target_person,
                                           double iou_threshold = kDefaultIouThreshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "iou_threshold must be in (0,1]");
  }
  std::vector<bool> hits;
  hits.reserve(list.entries.size());
  std::unordered_set<std::string> claimed_frames;
  for (const RankedEntry& e : list.entries) {
    const GalleryItem& item = ds.item(e.item_id);
    const auto fit = ds.frames.find(item.frame_id);
    if (fit == ds.frames.end()) {
      fail(ErrorCode::UnknownFrame,
           "item " + item.item_id + " references frame " + item.frame_id +
               " absent from ground truth");
    }
    bool hit = false;
    // At most one ground-truth box per (frame, person) by the frame
    // invariant, so a claimed frame means a claimed box.
    if (claimed_frames.find(item.frame_id) == claimed_frames.end()) {
      for (const GtBox& g : fit->second.gt) {
        if (g.person_id == target_person &&
            iou(item.bbox, g.bbox) >= iou_threshold) {
          hit = true;
          claimed_frames.insert(item.frame_id);
          break;
        }
      }
    }
    hits.push_back(hit);
  }
  return hits;
}

/// Interpolation-free average precision: the sum over hit positions p of
/// precision@p, divided by num_gt.
inline double average_precision(const std::vector<bool>& hits,
                                std::size_t num_gt) {
  if (num_gt == 0) {
    fail(ErrorCode::NoGroundTruth, "average_precision: num_gt is zero");
  }
  std::size_t hit_count = 0;
  double sum = 0.0;
  for (std::size_t p = 0; p < hits.size(); ++p) {
    if (hits[p]) {
      ++hit_count;
      sum += static_cast<double>(hit_count) / static_cast<double>(p + 1);
    }
  }
  if (hit_count > num_gt) {
    fail(ErrorCode::InvalidArgument,
         "average_precision: " + std::to_string(hit_count) + " hits exceed " +
             std::to_string(num_gt) + " ground-truth boxes");
  }
  return sum / static_cast<double>(num_gt);
}

/// 1 iff any of the first k flags is a hit.
inline int cmc_at_k(const std::vector<bool>& hits, std::size_t k) {
  if (k < 1) {
    fail(ErrorCode::InvalidK, "cmc_at_k: k must be >= 1");
  }
  const std::size_t n = std::min(k, hits.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i]) {
      return 1;
    }
  }
  return 0;
}

namespace detail {

// Ground-truth denominator for one probe: the number of frames spanned by
// the ranked gallery that contain a ground-truth box of the target person.
// Sampling a detection pulls its whole frame into the searched set, so a
// person the detector missed in a spanned frame still counts against
// recall. The probe's own frame is excluded automatically whenever the
// ranking protocol kept its items out of the list.
inline std::size_t search_num_gt(const RankedList& list, const Dataset& ds,
                                 const std::string& target_person) {
  std::set<std::string> frames;
  for (const RankedEntry& e : list.entries) {
    frames.insert(ds.item(e.item_id).frame_id);
  }
  std::size_t num_gt = 0;
  for (const std::string& fid : frames) {
    const auto fit = ds.frames.find(fid);
    if (fit == ds.frames.end()) {
      fail(ErrorCode::UnknownFrame, "frame " + fid + " absent from ground truth");
    }
    for (const GtBox& g : fit->second.gt) {
      if (g.person_id == target_person) {
        ++num_gt;
        break;  // one box per (frame, person)
      }
    }
  }
  return num_gt;
}

}  // namespace detail

/// Full search evaluation over per-probe ranked lists. Probes aggregate in
/// ascending probe_id order; probes whose gallery spans no ground-truth
/// occurrence are skipped and counted, and per-probe failures are recorded
/// without aborting the run.
inline EvalReport evaluate_search(const std::vector<RankedList>& ranked,
                                  const Dataset& ds,
                                  const std::vector<std::size_t>& ks,
                                  double iou_threshold = kDefaultIouThreshold) {
  for (std::size_t k : ks) {
    if (k < 1) {
      fail(ErrorCode::InvalidK, "evaluate_search: CMC K must be >= 1");
    }
  }
  std::vector<const RankedList*> ordered;
  ordered.reserve(ranked.size());
  for (const RankedList& r : ranked) {
    ordered.push_back(&r);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const RankedList* a, const RankedList* b) {
              return a->probe_id < b->probe_id;
            });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->probe_id == ordered[i - 1]->probe_id) {
      fail(ErrorCode::InvalidArgument,
           "evaluate_search: duplicate ranked list for probe " +
               ordered[i]->probe_id);
    }
  }

  EvalReport report;
  std::vector<std::size_t> sorted_ks(ks.begin(), ks.end());
  std::sort(sorted_ks.begin(), sorted_ks.end());
  std::vector<std::size_t> cmc_hits(sorted_ks.size(), 0);
  double ap_sum = 0.0;

  for (const RankedList* list : ordered) {
    try {
      const GalleryItem& probe = ds.item(list->probe_id);
      if (!probe.person_id) {
        report.issues.push_back("probe " + list->probe_id + " has no person_id");
        ++report.num_skipped;
        continue;
      }
      const std::string& target = *probe.person_id;
      const std::size_t num_gt = detail::search_num_gt(*list, ds, target);
      if (num_gt == 0) {
        ++report.num_skipped;
        continue;
      }
      const std::vector<bool> hits =
          match_ranked_list(*list, ds, target, iou_threshold);
      const double ap = average_precision(hits, num_gt);
      ProbeEvalEntry entry;
      entry.probe_id = list->probe_id;
      entry.ap = ap;
      entry.num_gt = num_gt;
      entry.num_hits = static_cast<std::size_t>(
          std::count(hits.begin(), hits.end(), true));
      report.per_probe.push_back(std::move(entry));
      ap_sum += ap;
      for (std::size_t i = 0; i < sorted_ks.size(); ++i) {
        cmc_hits[i] += static_cast<std::size_t>(cmc_at_k(hits, sorted_ks[i]));
      }
    } catch (const Error& e) {
      report.issues.push_back("probe " + list->probe_id + ": " + e.what());
      ++report.num_skipped;
    }
  }

  report.num_probes = report.per_probe.size();
  if (report.num_probes > 0) {
    report.map_score = ap_sum / static_cast<double>(report.num_probes);
    for (std::size_t i = 0; i < sorted_ks.size(); ++i) {
      report.cmc.emplace_back(sorted_ks[i],
                              static_cast<double>(cmc_hits[i]) /
                                  static_cast<double>(report.num_probes));
    }
  } else {
    for (std::size_t k : sorted_ks) {
      report.cmc.emplace_back(k, 0.0);
    }
  }
  return report;
}

/// Detection evaluation, identity-blind: detections sorted by det_score
/// descending (ties by ascending item_id) claim the best not-yet-claimed
/// ground-truth box in their frame at IoU >= threshold. AP uses the total
/// ground-truth box count as denominator; recall is the claimed fraction.
inline DetectionReport evaluate_detection(const std::vector<GalleryItem>& detections,
                                          const Dataset& ds,
                                          double iou_threshold = kDefaultIouThreshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "iou_threshold must be in (0,1]");
  }
  std::size_t num_gt = 0;
  std::map<std::string, std::vector<bool>> claimed;
  for (const auto& [fid, frame] : ds.frames) {
    num_gt += frame.gt.size();
    claimed[fid].assign(frame.gt.size(), false);
  }
  if (num_gt == 0) {
    fail(ErrorCode::NoGroundTruth, "evaluate_detection: dataset has no ground-truth boxes");
  }

  std::vector<const GalleryItem*> ordered;
  ordered.reserve(detections.size());
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

  std::vector<bool> hits;
  hits.reserve(ordered.size());
  std::size_t matched = 0;
  for (const GalleryItem* d : ordered) {
    const auto fit = ds.frames.find(d->frame_id);
    if (fit == ds.frames.end()) {
      fail(ErrorCode::UnknownFrame,
           "detection " + d->item_id + " references frame " + d->frame_id +
               " absent from ground truth");
    }
    const Frame& frame = fit->second;
    std::vector<bool>& frame_claimed = claimed[d->frame_id];
    double best_iou = 0.0;
    std::size_t best = frame.gt.size();
    for (std::size_t g = 0; g < frame.gt.size(); ++g) {
      if (frame_claimed[g]) {
        continue;
      }
      const double v = iou(d->bbox, frame.gt[g].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < frame.gt.size() && best_iou >= iou_threshold) {
      frame_claimed[best] = true;
      hits.push_back(true);
      ++matched;
    } else {
      hits.push_back(false);
    }
  }

  DetectionReport report;
  report.num_gt = num_gt;
  report.num_detections = detections.size();
  report.ap = hits.empty() ? 0.0 : average_precision(hits, num_gt);
  report.recall = static_cast<double>(matched) / static_cast<double>(num_gt);
  return report;
}

// --------------------------------------------------------------------------
// Report serialization: key-value header, then a per-probe table. Floats
// use the same 9-significant-digit format as ranked lists.
// --------------------------------------------------------------------------

inline void write_eval_report(std::ostream& os, const EvalReport& report) {
  os << "num_probes\t" << report.num_probes << '\n';
  os << "num_skipped\t" << report.num_skipped << '\n';
  os << "map\t" << format_score(report.map_score) << '\n';
  for (const auto& [k, rate] : report.cmc) {
    os << "cmc_top_" << k << '\t' << format_score(rate) << '\n';
  }
  for (const std::string& issue : report.issues) {
    os << "issue\t" << issue << '\n';
  }
  os << "# probe_id\tap\tnum_gt\tnum_hits\n";
  for (const ProbeEvalEntry& e : report.per_probe) {
    os << e.probe_id << '\t' << format_score(e.ap) << '\t' << e.num_gt << '\t'
       << e.num_hits << '\n';
  }
}

inline void write_detection_report(std::ostream& os, const DetectionReport& report) {
  os << "detection_ap\t" << format_score(report.ap) << '\n';
  os << "detection_recall\t" << format_score(report.recall) << '\n';
  os << "num_gt\t" << report.num_gt << '\n';
  os << "num_detections\t" << report.num_detections << '\n';
}

}  // namespace orsearch
