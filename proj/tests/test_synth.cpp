#include "orsearch/synth.hpp"

#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "orsearch/engine.hpp"
#include "orsearch/eval.hpp"
#include "orsearch/oracle.hpp"
#include "test_util.hpp"

using namespace orsearch;
using orsearch::testutil::TempDir;
using orsearch::testutil::throws_code;

namespace {

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.num_identities = 12;
  cfg.embedding_dim = 16;
  cfg.frames_per_identity = 2;
  cfg.distractor_fraction = 0.4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(SynthConfig, JsonRoundTrip) {
  SynthConfig cfg = small_config(9);
  cfg.positive_score_dist = ScoreDist::constant(0.99);
  const SynthConfig back = SynthConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.num_identities, cfg.num_identities);
  EXPECT_EQ(back.embedding_dim, cfg.embedding_dim);
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(back.positive_score_dist.kind, ScoreDist::Kind::Const);
  EXPECT_EQ(back.distractor_score_dist.kind, ScoreDist::Kind::Bimodal);
  EXPECT_EQ(back.distractor_score_dist.high_weight,
            cfg.distractor_score_dist.high_weight);
}

TEST(SynthConfig, Validation) {
  SynthConfig cfg;
  cfg.embedding_dim = 1;
  EXPECT_TRUE(throws_code([&] { cfg.validate(); }, ErrorCode::ConfigError));
  cfg = SynthConfig{};
  cfg.distractor_fraction = 1.0;
  EXPECT_TRUE(throws_code([&] { cfg.validate(); }, ErrorCode::ConfigError));
  cfg = SynthConfig{};
  cfg.occlusion_rate = -0.1;
  EXPECT_TRUE(throws_code([&] { cfg.validate(); }, ErrorCode::ConfigError));
}

TEST(Generate, DatasetIsValidAndSized) {
  const SynthConfig cfg = small_config(3);
  const Dataset ds = generate(cfg);
  EXPECT_EQ(ds.embedding_dim, 16u);
  EXPECT_EQ(ds.probes.size(), 12u);
  const std::size_t n_pos = 12 * 2;
  const std::size_t n_dis = std::llround(0.4 / 0.6 * n_pos);
  EXPECT_EQ(ds.items.size(), n_pos + n_dis);
  // probes have person ids, all frames resolve
  for (const std::string& pid : ds.probes) {
    EXPECT_TRUE(ds.item(pid).person_id.has_value());
  }
  for (const GalleryItem& it : ds.items) {
    EXPECT_TRUE(ds.frames.count(it.frame_id) == 1);
    EXPECT_GE(it.det_score, 0.0);
    EXPECT_LE(it.det_score, 1.0);
    EXPECT_TRUE(it.bbox.valid());
  }
  // every frame's ground truth has pairwise distinct persons and each
  // positive detection overlaps its own box at IoU >= 0.5
  for (const GalleryItem& it : ds.items) {
    if (!it.person_id) {
      continue;
    }
    bool found = false;
    for (const GtBox& g : ds.frames.at(it.frame_id).gt) {
      if (g.person_id == *it.person_id) {
        EXPECT_GE(iou(it.bbox, g.bbox), 0.5);
        found = true;
      }
    }
    EXPECT_TRUE(found);
  }
  // distractor boxes never claim ground truth
  for (const GalleryItem& it : ds.items) {
    if (it.person_id) {
      continue;
    }
    for (const GtBox& g : ds.frames.at(it.frame_id).gt) {
      EXPECT_LT(iou(it.bbox, g.bbox), 0.5);
    }
  }
}

TEST(Generate, DeterministicBytes) {
  const SynthConfig cfg = small_config(7);
  TempDir d1("gen1");
  TempDir d2("gen2");
  save_dataset(generate(cfg), d1.path());
  save_dataset(generate(cfg), d2.path());
  for (const char* name :
       {"embeddings.bin", "items.jsonl", "frames.jsonl", "probes.jsonl"}) {
    EXPECT_EQ(file_bytes(d1.path() / name), file_bytes(d2.path() / name)) << name;
  }
  TempDir d3("gen3");
  SynthConfig other = cfg;
  other.seed = 8;
  save_dataset(generate(other), d3.path());
  EXPECT_NE(file_bytes(d1.path() / "embeddings.bin"),
            file_bytes(d3.path() / "embeddings.bin"));
}

TEST(Generate, ZeroNoiseZeroOcclusionCollapsesToCenters) {
  SynthConfig cfg = small_config(5);
  cfg.intra_class_noise_sigma = 0.0;
  cfg.occlusion_rate = 0.0;
  cfg.distractor_fraction = 0.0;
  const Dataset ds = generate(cfg);
  std::map<std::string, std::vector<const GalleryItem*>> by_person;
  for (const GalleryItem& it : ds.items) {
    ASSERT_TRUE(it.person_id.has_value());
    by_person[*it.person_id].push_back(&it);
  }
  EXPECT_EQ(by_person.size(), cfg.num_identities);
  for (const auto& [person, items] : by_person) {
    ASSERT_EQ(items.size(), cfg.frames_per_identity);
    const double norm = std::sqrt(squared_norm(items[0]->embedding));
    EXPECT_NEAR(norm, 1.0, 1e-6);
    for (const GalleryItem* it : items) {
      EXPECT_EQ(it->embedding.values, items[0]->embedding.values);
    }
  }
}

TEST(Generate, FullOcclusionWithAlphaOneCopiesTheOccluder) {
  // Baseline run recovers the centers; the occluded run must then consist
  // of detections equal to a co-frame occluder's center.
  SynthConfig base = small_config(11);
  base.intra_class_noise_sigma = 0.0;
  base.distractor_fraction = 0.0;
  base.occlusion_rate = 0.0;
  const Dataset clean = generate(base);
  std::map<std::string, Embedding> center_of;
  for (const GalleryItem& it : clean.items) {
    center_of[*it.person_id] = it.embedding;
  }

  SynthConfig occluded_cfg = base;
  occluded_cfg.occlusion_rate = 1.0;
  occluded_cfg.occlusion_alpha = 1.0;
  const Dataset ds = generate(occluded_cfg);
  std::map<std::string, std::vector<const GalleryItem*>> frame_items;
  for (const GalleryItem& it : ds.items) {
    frame_items[it.frame_id].push_back(&it);
  }
  std::size_t checked = 0;
  for (const auto& [fid, items] : frame_items) {
    if (items.size() < 2) {
      continue;
    }
    for (const GalleryItem* it : items) {
      bool matches_other = false;
      for (const GalleryItem* other : items) {
        if (other->person_id == it->person_id) {
          continue;
        }
        const Embedding& c = center_of.at(*other->person_id);
        double max_diff = 0.0;
        for (std::size_t i = 0; i < c.values.size(); ++i) {
          max_diff = std::max<double>(max_diff,
                                      std::abs(c.values[i] - it->embedding.values[i]));
        }
        if (max_diff < 1e-5) {
          matches_other = true;
        }
      }
      EXPECT_TRUE(matches_other) << "item " << it->item_id;
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Generate, DistractorFractionTooLargeForCapacity) {
  SynthConfig cfg = small_config(3);
  cfg.distractor_fraction = 0.9;  // 216 distractors, far above 4 per frame
  EXPECT_TRUE(throws_code([&] { generate(cfg); }, ErrorCode::ConfigError));
}

TEST(Generate, ScoreShapeMatchesConfiguredDistributions) {
  SynthConfig cfg;
  cfg.num_identities = 2500;  // 10k items at the default shape
  const Dataset ds = generate(cfg);
  EXPECT_EQ(ds.items.size(), 10000u);
  const ScoreHistograms h = detection_score_histogram(ds, 20);
  std::uint64_t pos_total = 0, pos_above = 0, dis_total = 0, dis_below = 0;
  for (std::size_t b = 0; b < 20; ++b) {
    pos_total += h.positive[b];
    dis_total += h.distractor[b];
    if (b >= 18) {
      pos_above += h.positive[b];  // scores in [0.9, 1.0]
    } else {
      dis_below += h.distractor[b];
    }
  }
  EXPECT_GE(static_cast<double>(pos_above), 0.98 * static_cast<double>(pos_total));
  EXPECT_GE(static_cast<double>(dis_below), 0.40 * static_cast<double>(dis_total));
  // bimodal shape: both mode regions carry real mass
  std::uint64_t low_region = 0, high_region = 0;
  for (std::size_t b = 0; b < 20; ++b) {
    (b < 16 ? low_region : high_region) += h.distractor[b];
  }
  EXPECT_GT(low_region, dis_total / 5);
  EXPECT_GT(high_region, dis_total / 5);
}

TEST(BruteForceRank, BitwiseEquivalentToEngine) {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    SynthConfig cfg = small_config(seed);
    cfg.num_identities = 20;
    cfg.distractor_fraction = 0.45;
    const Dataset ds = generate(cfg);
    ASSERT_LE(ds.items.size(), 200u);
    for (ScoringMode mode : {ScoringMode::Visual, ScoringMode::VisualO,
                             ScoringMode::VisualR, ScoringMode::VisualOR}) {
      for (std::size_t p = 0; p < ds.probes.size(); p += 3) {
        const ProbeContext ctx = build_probe_context(ds, ds.probes[p]);
        const RankedList fast = rank_gallery(ctx, ds.items, mode, true);
        const RankedList slow =
            oracle::brute_force_rank(ctx, ds.items, mode, true);
        ASSERT_EQ(fast.entries.size(), slow.entries.size());
        for (std::size_t i = 0; i < fast.entries.size(); ++i) {
          ASSERT_EQ(fast.entries[i].item_id, slow.entries[i].item_id)
              << "seed " << seed << " mode " << to_string(mode) << " rank " << i;
          ASSERT_EQ(fast.entries[i].score.combined, slow.entries[i].score.combined);
          ASSERT_EQ(fast.entries[i].score.visual, slow.entries[i].score.visual);
          ASSERT_EQ(fast.entries[i].score.objectness,
                    slow.entries[i].score.objectness);
          ASSERT_EQ(fast.entries[i].score.repulsion, slow.entries[i].score.repulsion);
          ASSERT_EQ(fast.entries[i].score.gap, slow.entries[i].score.gap);
          ASSERT_EQ(fast.entries[i].score.nearest_query_index,
                    slow.entries[i].score.nearest_query_index);
        }
      }
    }
  }
}

TEST(BruteForceRank, TrivialCases) {
  const SynthConfig cfg = small_config(4);
  const Dataset ds = generate(cfg);
  const ProbeContext ctx = build_probe_context(ds, ds.probes[0]);
  const GalleryItem* other_frame = nullptr;
  for (const GalleryItem& it : ds.items) {
    if (it.frame_id != ctx.probe.frame_id) {
      other_frame = &it;
      break;
    }
  }
  ASSERT_NE(other_frame, nullptr);
  const RankedList list = oracle::brute_force_rank(ctx, {*other_frame},
                                                   ScoringMode::VisualOR, true);
  ASSERT_EQ(list.entries.size(), 1u);
  EXPECT_EQ(list.entries[0].item_id, other_frame->item_id);
}

TEST(BruteForceMap, MatchesEvaluateSearchOnSeededInstances) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig cfg = small_config(seed);
    cfg.num_identities = 8;
    cfg.frames_per_identity = 2;
    cfg.distractor_fraction = 0.3;
    const Dataset ds = generate(cfg);
    RankOptions opts;
    opts.mode = ScoringMode::VisualOR;
    const std::vector<RankedList> ranked = rank_probes(ds, ds.probes, opts);
    const EvalReport report = evaluate_search(ranked, ds, {1, 5});
    EXPECT_NEAR(report.map_score, oracle::brute_force_map(ranked, ds), 1e-9);
    EXPECT_NEAR(report.cmc[0].second, oracle::brute_force_cmc(ranked, ds, 1), 1e-9);
    EXPECT_NEAR(report.cmc[1].second, oracle::brute_force_cmc(ranked, ds, 5), 1e-9);
    const DetectionReport det = evaluate_detection(ds.items, ds);
    const auto det_oracle = oracle::brute_force_detection(ds.items, ds);
    EXPECT_NEAR(det.ap, det_oracle.ap, 1e-9);
    EXPECT_NEAR(det.recall, det_oracle.recall, 1e-9);
  }
}

TEST(Generate, OrModesImproveMapOnDefaultShape) {
  // Scaled-down default benchmark; the full five-seed sweep runs in the
  // acceptance suite.
  SynthConfig cfg;
  cfg.num_identities = 150;
  const Dataset ds = generate(cfg);
  std::map<ScoringMode, double> map_of;
  for (ScoringMode mode : {ScoringMode::Visual, ScoringMode::VisualO,
                           ScoringMode::VisualR, ScoringMode::VisualOR}) {
    RankOptions opts;
    opts.mode = mode;
    const std::vector<RankedList> ranked = rank_probes(ds, ds.probes, opts);
    map_of[mode] = evaluate_search(ranked, ds, {1}).map_score;
  }
  EXPECT_GT(map_of[ScoringMode::VisualO], map_of[ScoringMode::Visual]);
  EXPECT_GT(map_of[ScoringMode::VisualR], map_of[ScoringMode::Visual]);
  EXPECT_GE(map_of[ScoringMode::VisualOR], map_of[ScoringMode::VisualO]);
  EXPECT_GE(map_of[ScoringMode::VisualOR], map_of[ScoringMode::VisualR]);
}

TEST(Generate, ForcedFullConfidenceMakesVisualAndObjectnessModesAgree) {
  SynthConfig cfg = small_config(21);
  cfg.positive_score_dist = ScoreDist::constant(1.0);
  cfg.distractor_score_dist = ScoreDist::constant(1.0);
  const Dataset ds = generate(cfg);
  RankOptions v;
  v.mode = ScoringMode::Visual;
  RankOptions o;
  o.mode = ScoringMode::VisualO;
  const auto rv = rank_probes(ds, ds.probes, v);
  const auto ro = rank_probes(ds, ds.probes, o);
  ASSERT_EQ(rv.size(), ro.size());
  for (std::size_t p = 0; p < rv.size(); ++p) {
    ASSERT_EQ(rv[p].entries.size(), ro[p].entries.size());
    for (std::size_t i = 0; i < rv[p].entries.size(); ++i) {
      EXPECT_EQ(rv[p].entries[i].item_id, ro[p].entries[i].item_id);
    }
  }
}
