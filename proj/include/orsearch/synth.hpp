#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orsearch/core.hpp"
#include "orsearch/dataset.hpp"
#include "orsearch/rng.hpp"

namespace orsearch {

/// Named detection-score distribution. `normal` is clamped to [0,1];
/// `bimodal` mixes a high and a low clamped-normal component and exposes
/// which component a draw came from.
struct ScoreDist {
  enum class Kind { Const, Normal, Bimodal };

  Kind kind = Kind::Const;
  double value = 1.0;        // Const
  double mean = 0.0;         // Normal
  double sigma = 0.0;        // Normal
  double high_mean = 0.0;    // Bimodal
  double high_sigma = 0.0;
  double low_mean = 0.0;
  double low_sigma = 0.0;
  double high_weight = 0.5;

  static ScoreDist constant(double v) {
    ScoreDist d;
    d.kind = Kind::Const;
    d.value = v;
    return d;
  }

  static ScoreDist normal(double mean, double sigma) {
    ScoreDist d;
    d.kind = Kind::Normal;
    d.mean = mean;
    d.sigma = sigma;
    return d;
  }

  static ScoreDist bimodal(double high_mean, double high_sigma, double low_mean,
                           double low_sigma, double high_weight) {
    ScoreDist d;
    d.kind = Kind::Bimodal;
    d.high_mean = high_mean;
    d.high_sigma = high_sigma;
    d.low_mean = low_mean;
    d.low_sigma = low_sigma;
    d.high_weight = high_weight;
    return d;
  }

  /// Draw order: Bimodal consumes one uniform for the component choice and
  /// then one gaussian; Normal consumes one gaussian; Const consumes
  /// nothing. `high_component` reports the component (always true for
  /// Const/Normal draws above 0.8, which only the generator's typing
  /// fallback cares about).
  double sample(CounterRng& rng, bool* high_component = nullptr) const {
    auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
    switch (kind) {
      case Kind::Const:
        if (high_component) *high_component = value > 0.8;
        return clamp01(value);
      case Kind::Normal: {
        const double v = clamp01(mean + sigma * rng.next_gaussian());
        if (high_component) *high_component = v > 0.8;
        return v;
      }
      case Kind::Bimodal: {
        const bool high = rng.next_double() < high_weight;
        if (high_component) *high_component = high;
        const double m = high ? high_mean : low_mean;
        const double s = high ? high_sigma : low_sigma;
        return clamp01(m + s * rng.next_gaussian());
      }
    }
    fail(ErrorCode::Internal, "unreachable ScoreDist kind");
  }

  nlohmann::json to_json() const {
    switch (kind) {
      case Kind::Const:
        return {{"kind", "const"}, {"value", value}};
      case Kind::Normal:
        return {{"kind", "normal"}, {"mean", mean}, {"sigma", sigma}};
      case Kind::Bimodal:
        return {{"kind", "bimodal"},     {"high_mean", high_mean},
                {"high_sigma", high_sigma}, {"low_mean", low_mean},
                {"low_sigma", low_sigma},   {"high_weight", high_weight}};
    }
    fail(ErrorCode::Internal, "unreachable ScoreDist kind");
  }

  static ScoreDist from_json(const nlohmann::json& j) {
    try {
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "const") {
        return constant(j.at("value").get<double>());
      }
      if (kind == "normal") {
        return normal(j.at("mean").get<double>(), j.at("sigma").get<double>());
      }
      if (kind == "bimodal") {
        return bimodal(j.at("high_mean").get<double>(),
                       j.at("high_sigma").get<double>(),
                       j.at("low_mean").get<double>(),
                       j.at("low_sigma").get<double>(),
                       j.at("high_weight").get<double>());
      }
      fail(ErrorCode::ConfigError, "unknown score distribution kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ConfigError, std::string("score distribution: ") + e.what());
    }
  }
};

/// Generator configuration. Identities are unit-sphere cluster centers;
/// every identity appears in `frames_per_identity` frames of 2-4 persons
/// each. `intra_class_noise_sigma` is the expected noise norm relative to
/// the unit center (per-element std is sigma/sqrt(dim)), so configs behave
/// the same across embedding dimensions. `distractor_fraction` is the
/// fraction of all detections that are distractors.
struct SynthConfig {
  std::size_t num_identities = 500;
  std::size_t embedding_dim = 64;
  std::size_t frames_per_identity = 2;
  double distractor_fraction = 0.5;
  double occlusion_rate = 0.3;
  double occlusion_alpha = 0.5;
  double intra_class_noise_sigma = 0.45;
  ScoreDist positive_score_dist = ScoreDist::normal(0.97, 0.02);
  ScoreDist distractor_score_dist = ScoreDist::bimodal(0.93, 0.04, 0.65, 0.12, 0.5);
  std::uint64_t seed = 1;

  void validate() const {
    if (num_identities < 1) {
      fail(ErrorCode::ConfigError, "num_identities must be >= 1");
    }
    if (embedding_dim < 2) {
      fail(ErrorCode::ConfigError, "embedding_dim must be >= 2");
    }
    if (frames_per_identity < 1) {
      fail(ErrorCode::ConfigError, "frames_per_identity must be >= 1");
    }
    if (!(distractor_fraction >= 0.0 && distractor_fraction < 1.0)) {
      fail(ErrorCode::ConfigError, "distractor_fraction must be in [0,1)");
    }
    if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
      fail(ErrorCode::ConfigError, "occlusion_rate must be in [0,1]");
    }
    if (!(occlusion_alpha >= 0.0 && occlusion_alpha <= 1.0)) {
      fail(ErrorCode::ConfigError, "occlusion_alpha must be in [0,1]");
    }
    if (!(intra_class_noise_sigma >= 0.0)) {
      fail(ErrorCode::ConfigError, "intra_class_noise_sigma must be >= 0");
    }
  }

  nlohmann::json to_json() const {
    return {{"num_identities", num_identities},
            {"embedding_dim", embedding_dim},
            {"frames_per_identity", frames_per_identity},
            {"distractor_fraction", distractor_fraction},
            {"occlusion_rate", occlusion_rate},
            {"occlusion_alpha", occlusion_alpha},
            {"intra_class_noise_sigma", intra_class_noise_sigma},
            {"positive_score_dist", positive_score_dist.to_json()},
            {"distractor_score_dist", distractor_score_dist.to_json()},
            {"seed", seed}};
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig cfg;
    try {
      if (j.contains("num_identities")) cfg.num_identities = j["num_identities"].get<std::size_t>();
      if (j.contains("embedding_dim")) cfg.embedding_dim = j["embedding_dim"].get<std::size_t>();
      if (j.contains("frames_per_identity")) cfg.frames_per_identity = j["frames_per_identity"].get<std::size_t>();
      if (j.contains("distractor_fraction")) cfg.distractor_fraction = j["distractor_fraction"].get<double>();
      if (j.contains("occlusion_rate")) cfg.occlusion_rate = j["occlusion_rate"].get<double>();
      if (j.contains("occlusion_alpha")) cfg.occlusion_alpha = j["occlusion_alpha"].get<double>();
      if (j.contains("intra_class_noise_sigma")) cfg.intra_class_noise_sigma = j["intra_class_noise_sigma"].get<double>();
      if (j.contains("positive_score_dist")) cfg.positive_score_dist = ScoreDist::from_json(j["positive_score_dist"]);
      if (j.contains("distractor_score_dist")) cfg.distractor_score_dist = ScoreDist::from_json(j["distractor_score_dist"]);
      if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ConfigError, std::string("synth config: ") + e.what());
    }
    cfg.validate();
    return cfg;
  }
};

namespace detail {

// Frame canvas layout: 8 disjoint 240px-wide columns on a 1920x1080 canvas.
// Person boxes occupy columns 0-3 and distractor boxes columns 4-7, so
// distractors never reach IoU 0.5 against any ground-truth box.
inline constexpr std::size_t kMaxPersonsPerFrame = 4;
inline constexpr std::size_t kMaxDistractorsPerFrame = 4;
inline constexpr double kPartDistractorNoiseSigma = 0.8;

inline double slot_x(std::size_t slot) { return 8.0 + 240.0 * static_cast<double>(slot); }

inline Embedding gaussian_direction(CounterRng& rng, std::size_t dim,
                                    double per_element_sigma) {
  Embedding e;
  e.values.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    e.values[i] = static_cast<float>(per_element_sigma * rng.next_gaussian());
  }
  return e;
}

inline Embedding add_and_normalize(const Embedding& center, const Embedding& noise) {
  Embedding sum;
  sum.values.resize(center.values.size());
  for (std::size_t i = 0; i < center.values.size(); ++i) {
    sum.values[i] = static_cast<float>(static_cast<double>(center.values[i]) +
                                       static_cast<double>(noise.values[i]));
  }
  return l2_normalize(sum);
}

inline std::string identity_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "p%05zu", i);
  return buf;
}

inline std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "f%06zu", i);
  return buf;
}

inline std::string item_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "i%06zu", i);
  return buf;
}

}  // namespace detail

/// Generates a synthetic person-search dataset. Phenomena modeled:
///
///  * identities are unit cluster centers; detections are noisy samples of
///    their center;
///  * with probability occlusion_rate, a detection in a multi-person frame
///    is contaminated by convex mixing with a co-frame occluder's
///    embedding (coefficient occlusion_alpha);
///  * positive detection scores concentrate near 1; distractors split into
///    a high-score mode (unlabeled-pedestrian-like: an unrelated identity
///    of its own) and a low-score mode (partial-person crops of a real
///    identity, plus noise), mirroring how real detectors score them;
///  * every identity's first appearance is a probe.
///
/// The output is byte-for-byte deterministic given the config: a single
/// counter RNG stream is consumed in a fixed documented order (centers,
/// frame composition, person geometry/scores/noise, occlusion pass,
/// distractor pass).
inline Dataset generate(const SynthConfig& cfg) {
  cfg.validate();

  const std::size_t n_identities = cfg.num_identities;
  const std::size_t dim = cfg.embedding_dim;
  const std::size_t n_positives = n_identities * cfg.frames_per_identity;
  const auto n_distractors = static_cast<std::size_t>(std::llround(
      cfg.distractor_fraction / (1.0 - cfg.distractor_fraction) *
      static_cast<double>(n_positives)));

  CounterRng rng(cfg.seed);

  // 1. Identity centers on the unit sphere.
  std::vector<Embedding> centers;
  centers.reserve(n_identities);
  for (std::size_t i = 0; i < n_identities; ++i) {
    centers.push_back(l2_normalize(detail::gaussian_direction(rng, dim, 1.0)));
  }

  // 2. Frame composition: one round per appearance. Each round shuffles
  // the identity list and cuts it into frames of 2-4 persons, so no frame
  // repeats an identity.
  std::vector<std::vector<std::size_t>> frame_identities;
  for (std::size_t round = 0; round < cfg.frames_per_identity; ++round) {
    std::vector<std::size_t> perm(n_identities);
    for (std::size_t i = 0; i < n_identities; ++i) perm[i] = i;
    for (std::size_t i = 0; i + 1 < n_identities; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.next_below(n_identities - i));
      std::swap(perm[i], perm[j]);
    }
    std::size_t pos = 0;
    while (pos < n_identities) {
      const std::size_t want = 2 + static_cast<std::size_t>(rng.next_below(3));
      const std::size_t take = std::min(want, n_identities - pos);
      frame_identities.emplace_back(perm.begin() + pos, perm.begin() + pos + take);
      pos += take;
    }
  }
  const std::size_t n_frames = frame_identities.size();
  if (n_distractors > n_frames * detail::kMaxDistractorsPerFrame) {
    fail(ErrorCode::ConfigError,
         "distractor_fraction too large: " + std::to_string(n_distractors) +
             " distractors exceed frame capacity " +
             std::to_string(n_frames * detail::kMaxDistractorsPerFrame));
  }

  Dataset ds;
  ds.embedding_dim = static_cast<std::uint32_t>(dim);
  const double noise_sigma =
      cfg.intra_class_noise_sigma / std::sqrt(static_cast<double>(dim));

  // 3. Frames, ground truth, and positive detections.
  struct PersonRef {
    std::size_t item_index;
    std::size_t identity;
  };
  std::vector<std::vector<PersonRef>> frame_persons(n_frames);
  std::vector<std::string> first_appearance(n_identities);

  for (std::size_t f = 0; f < n_frames; ++f) {
    Frame frame;
    frame.frame_id = detail::frame_name(f);
    for (std::size_t s = 0; s < frame_identities[f].size(); ++s) {
      const std::size_t identity = frame_identities[f][s];
      const double w = 80.0 + 60.0 * rng.next_double();
      const double h = 200.0 + 120.0 * rng.next_double();
      const double x = detail::slot_x(s) + 40.0 * rng.next_double();
      const double y = 60.0 + (1080.0 - h - 140.0) * rng.next_double();
      frame.gt.push_back({BBox{x, y, w, h}, detail::identity_name(identity)});

      GalleryItem item;
      item.item_id = detail::item_name(ds.items.size());
      item.frame_id = frame.frame_id;
      const double dx = w * 0.08 * (2.0 * rng.next_double() - 1.0);
      const double dy = h * 0.08 * (2.0 * rng.next_double() - 1.0);
      item.bbox = BBox{x + dx, y + dy, w, h};
      item.det_score = cfg.positive_score_dist.sample(rng);
      if (cfg.intra_class_noise_sigma == 0.0) {
        item.embedding = centers[identity];
      } else {
        item.embedding = detail::add_and_normalize(
            centers[identity], detail::gaussian_direction(rng, dim, noise_sigma));
      }
      item.person_id = detail::identity_name(identity);
      frame_persons[f].push_back({ds.items.size(), identity});
      if (first_appearance[identity].empty()) {
        first_appearance[identity] = item.item_id;
      }
      ds.items.push_back(std::move(item));
    }
    ds.frames.emplace(frame.frame_id, std::move(frame));
  }

  // 4. Occlusion pass. Mixing reads pre-contamination embeddings so the
  // result does not depend on within-frame processing order.
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto& persons = frame_persons[f];
    if (persons.size() < 2) {
      continue;
    }
    std::vector<Embedding> pre;
    pre.reserve(persons.size());
    for (const PersonRef& p : persons) {
      pre.push_back(ds.items[p.item_index].embedding);
    }
    for (std::size_t s = 0; s < persons.size(); ++s) {
      if (rng.next_double() >= cfg.occlusion_rate) {
        continue;
      }
      std::size_t occluder =
          static_cast<std::size_t>(rng.next_below(persons.size() - 1));
      if (occluder >= s) {
        ++occluder;
      }
      Embedding mixed;
      mixed.values.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        mixed.values[i] = static_cast<float>(
            (1.0 - cfg.occlusion_alpha) * static_cast<double>(pre[s].values[i]) +
            cfg.occlusion_alpha * static_cast<double>(pre[occluder].values[i]));
      }
      ds.items[persons[s].item_index].embedding = l2_normalize(mixed);
    }
  }

  // 5. Distractors. The score component drives the embedding type: the
  // high mode is an unlabeled pedestrian with its own identity, the low
  // mode a partial crop of a real identity not present in the frame.
  std::vector<std::size_t> distractors_in_frame(n_frames, 0);
  for (std::size_t t = 0; t < n_distractors; ++t) {
    std::size_t f = static_cast<std::size_t>(rng.next_below(n_frames));
    while (distractors_in_frame[f] >= detail::kMaxDistractorsPerFrame) {
      f = (f + 1) % n_frames;
    }
    GalleryItem item;
    item.item_id = detail::item_name(ds.items.size());
    item.frame_id = detail::frame_name(f);
    const std::size_t slot = detail::kMaxPersonsPerFrame + distractors_in_frame[f];
    distractors_in_frame[f] += 1;
    const double w = 60.0 + 50.0 * rng.next_double();
    const double h = 140.0 + 120.0 * rng.next_double();
    const double x = detail::slot_x(slot) + 40.0 * rng.next_double();
    const double y = 60.0 + (1080.0 - h - 140.0) * rng.next_double();
    item.bbox = BBox{x, y, w, h};

    bool high = false;
    item.det_score = cfg.distractor_score_dist.sample(rng, &high);
    if (high) {
      item.embedding = l2_normalize(detail::gaussian_direction(rng, dim, 1.0));
    } else {
      std::size_t src = static_cast<std::size_t>(rng.next_below(n_identities));
      const auto& in_frame = frame_identities[f];
      std::size_t attempts = 0;
      while (attempts < n_identities &&
             std::find(in_frame.begin(), in_frame.end(), src) != in_frame.end()) {
        src = (src + 1) % n_identities;
        ++attempts;
      }
      item.embedding = detail::add_and_normalize(
          centers[src],
          detail::gaussian_direction(
              rng, dim,
              detail::kPartDistractorNoiseSigma / std::sqrt(static_cast<double>(dim))));
    }
    ds.items.push_back(std::move(item));
  }

  // 6. Probes: every identity's first appearance.
  for (std::size_t i = 0; i < n_identities; ++i) {
    ds.probes.push_back(first_appearance[i]);
  }
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    ds.index_by_id.emplace(ds.items[i].item_id, i);
  }
  return ds;
}

}  // namespace orsearch
