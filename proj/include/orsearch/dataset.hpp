#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "orsearch/core.hpp"
#include "orsearch/rng.hpp"
#include "orsearch/similarity.hpp"

namespace orsearch {

/// A fully cross-referenced collection of detections, frame ground truth,
/// and designated probes. Immutable after loading; share freely across
/// workers.
struct Dataset {
  std::vector<GalleryItem> items;          // order matches the embedding file
  std::map<std::string, Frame> frames;     // frame_id -> ground truth
  std::vector<std::string> probes;         // probe item_ids
  std::uint32_t embedding_dim = 0;
  std::unordered_map<std::string, std::size_t> index_by_id;

  const GalleryItem* find_item(const std::string& item_id) const {
    const auto it = index_by_id.find(item_id);
    return it == index_by_id.end() ? nullptr : &items[it->second];
  }

  const GalleryItem& item(const std::string& item_id) const {
    const GalleryItem* p = find_item(item_id);
    if (p == nullptr) {
      fail(ErrorCode::UnknownItem, "unknown item_id " + item_id);
    }
    return *p;
  }
};

struct DatasetPaths {
  std::filesystem::path embeddings;
  std::filesystem::path items;
  std::filesystem::path frames;
  std::filesystem::path probes;
};

inline DatasetPaths dataset_paths_in(const std::filesystem::path& dir) {
  return {dir / "embeddings.bin", dir / "items.jsonl", dir / "frames.jsonl",
          dir / "probes.jsonl"};
}

// --------------------------------------------------------------------------
// On-disk formats. Everything multi-byte is little-endian.
//
// embeddings.bin:  magic "ORSE" | u16 format version (= 1) | u64 count |
//                  u32 dim | count * dim IEEE-754 binary32, row-major,
//                  row order identical to items.jsonl record order.
// items.jsonl:     {"item_id","frame_id","bbox":[x,y,w,h],"det_score",
//                   "person_id"?} per line.
// frames.jsonl:    {"frame_id","gt":[{"bbox":[x,y,w,h],"person_id"}]} per line.
// probes.jsonl:    {"probe_item_id"} per line.
// --------------------------------------------------------------------------

namespace detail {

inline constexpr char kEmbeddingMagic[4] = {'O', 'R', 'S', 'E'};
inline constexpr std::uint16_t kEmbeddingFormatVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

inline BBox bbox_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) {
    fail(ErrorCode::FormatError, where + ": bbox must be [x,y,w,h]");
  }
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
         j[3].get<double>()};
  if (!b.valid()) {
    fail(ErrorCode::FormatError, where + ": invalid bbox (w,h must be > 0 and finite)");
  }
  return b;
}

inline nlohmann::json bbox_to_json(const BBox& b) {
  return nlohmann::json::array({b.x, b.y, b.w, b.h});
}

inline nlohmann::json parse_jsonl_line(const std::string& line,
                                       const std::filesystem::path& path,
                                       std::size_t line_no) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(ErrorCode::FormatError,
         path.string() + ":" + std::to_string(line_no) + ": malformed JSON record");
  }
  return j;
}

}  // namespace detail

/// Reads the raw embedding matrix. Validates magic, version, and a nonzero
/// dimension; the caller checks the count against the metadata.
inline std::vector<Embedding> load_embeddings(const std::filesystem::path& path,
                                              std::uint32_t& dim_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    fail(ErrorCode::IoError, "cannot open " + path.string());
  }
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, detail::kEmbeddingMagic, 4) != 0) {
    fail(ErrorCode::FormatError, path.string() + ": bad magic (expected ORSE)");
  }
  const auto version = detail::read_le<std::uint16_t>(is);
  if (version != detail::kEmbeddingFormatVersion) {
    fail(ErrorCode::FormatError,
         path.string() + ": unsupported format version " + std::to_string(version));
  }
  const auto count = detail::read_le<std::uint64_t>(is);
  const auto dim = detail::read_le<std::uint32_t>(is);
  if (!is) {
    fail(ErrorCode::FormatError, path.string() + ": truncated header");
  }
  if (dim == 0) {
    fail(ErrorCode::DimensionZero, path.string() + ": embedding dimension is zero");
  }
  std::vector<Embedding> rows(count);
  std::vector<float> buf(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(sizeof(float) * dim));
    if (!is) {
      fail(ErrorCode::FormatError,
           path.string() + ": truncated payload at row " + std::to_string(r));
    }
    rows[r].values = buf;
  }
  dim_out = dim;
  return rows;
}

inline void save_embeddings(const std::filesystem::path& path,
                            const std::vector<Embedding>& rows,
                            std::uint32_t dim) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    fail(ErrorCode::IoError, "cannot write " + path.string());
  }
  os.write(detail::kEmbeddingMagic, 4);
  detail::write_le<std::uint16_t>(os, detail::kEmbeddingFormatVersion);
  detail::write_le<std::uint64_t>(os, rows.size());
  detail::write_le<std::uint32_t>(os, dim);
  for (const Embedding& e : rows) {
    os.write(reinterpret_cast<const char*>(e.values.data()),
             static_cast<std::streamsize>(sizeof(float) * e.values.size()));
  }
  if (!os) {
    fail(ErrorCode::IoError, "write failed: " + path.string());
  }
}

/// Loads and fully validates a dataset: header count must equal the item
/// record count, every frame reference must resolve, every probe must be a
/// known item carrying a person_id.
inline Dataset load_dataset(const DatasetPaths& paths) {
  Dataset ds;
  std::vector<Embedding> rows = load_embeddings(paths.embeddings, ds.embedding_dim);

  std::ifstream frames_in(paths.frames);
  if (!frames_in) {
    fail(ErrorCode::IoError, "cannot open " + paths.frames.string());
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(frames_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = detail::parse_jsonl_line(line, paths.frames, line_no);
    Frame f;
    try {
      f.frame_id = j.at("frame_id").get<std::string>();
      std::set<std::string> persons_in_frame;
      for (const auto& g : j.at("gt")) {
        GtBox box;
        box.bbox = detail::bbox_from_json(g.at("bbox"), paths.frames.string());
        box.person_id = g.at("person_id").get<std::string>();
        if (!persons_in_frame.insert(box.person_id).second) {
          fail(ErrorCode::FormatError,
               paths.frames.string() + ": frame " + f.frame_id +
                   " lists person " + box.person_id + " twice");
        }
        f.gt.push_back(std::move(box));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::FormatError,
           paths.frames.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!ds.frames.emplace(f.frame_id, f).second) {
      fail(ErrorCode::FormatError,
           paths.frames.string() + ": duplicate frame_id " + f.frame_id);
    }
  }

  std::ifstream items_in(paths.items);
  if (!items_in) {
    fail(ErrorCode::IoError, "cannot open " + paths.items.string());
  }
  line_no = 0;
  while (std::getline(items_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = detail::parse_jsonl_line(line, paths.items, line_no);
    GalleryItem item;
    try {
      item.item_id = j.at("item_id").get<std::string>();
      item.frame_id = j.at("frame_id").get<std::string>();
      item.bbox = detail::bbox_from_json(j.at("bbox"), paths.items.string());
      item.det_score = j.at("det_score").get<double>();
      if (j.contains("person_id") && !j["person_id"].is_null()) {
        item.person_id = j["person_id"].get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::FormatError,
           paths.items.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!(item.det_score >= 0.0 && item.det_score <= 1.0)) {
      fail(ErrorCode::FormatError,
           paths.items.string() + ": item " + item.item_id + ": det_score " +
               std::to_string(item.det_score) + " outside [0,1]");
    }
    if (ds.frames.find(item.frame_id) == ds.frames.end()) {
      fail(ErrorCode::DanglingFrameRef,
           paths.items.string() + ": item " + item.item_id +
               " references unknown frame " + item.frame_id);
    }
    if (!ds.index_by_id.emplace(item.item_id, ds.items.size()).second) {
      fail(ErrorCode::FormatError,
           paths.items.string() + ": duplicate item_id " + item.item_id);
    }
    ds.items.push_back(std::move(item));
  }

  if (rows.size() != ds.items.size()) {
    fail(ErrorCode::CountMismatch,
         "embedding count " + std::to_string(rows.size()) +
             " != metadata record count " + std::to_string(ds.items.size()));
  }
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    ds.items[i].embedding = std::move(rows[i]);
  }

  std::ifstream probes_in(paths.probes);
  if (!probes_in) {
    fail(ErrorCode::IoError, "cannot open " + paths.probes.string());
  }
  line_no = 0;
  while (std::getline(probes_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = detail::parse_jsonl_line(line, paths.probes, line_no);
    std::string pid;
    try {
      pid = j.at("probe_item_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::FormatError,
           paths.probes.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const GalleryItem* item = ds.find_item(pid);
    if (item == nullptr) {
      fail(ErrorCode::FormatError,
           paths.probes.string() + ": probe " + pid + " is not a known item");
    }
    if (!item->person_id) {
      fail(ErrorCode::FormatError,
           paths.probes.string() + ": probe " + pid + " has no person_id");
    }
    ds.probes.push_back(std::move(pid));
  }
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  return load_dataset(dataset_paths_in(dir));
}

inline void save_dataset(const Dataset& ds, const DatasetPaths& paths) {
  std::vector<Embedding> rows;
  rows.reserve(ds.items.size());
  for (const GalleryItem& it : ds.items) {
    rows.push_back(it.embedding);
  }
  save_embeddings(paths.embeddings, rows, ds.embedding_dim);

  std::ofstream items_out(paths.items, std::ios::trunc);
  if (!items_out) {
    fail(ErrorCode::IoError, "cannot write " + paths.items.string());
  }
  for (const GalleryItem& it : ds.items) {
    nlohmann::json j;
    j["item_id"] = it.item_id;
    j["frame_id"] = it.frame_id;
    j["bbox"] = detail::bbox_to_json(it.bbox);
    j["det_score"] = it.det_score;
    if (it.person_id) {
      j["person_id"] = *it.person_id;
    }
    items_out << j.dump() << '\n';
  }

  std::ofstream frames_out(paths.frames, std::ios::trunc);
  if (!frames_out) {
    fail(ErrorCode::IoError, "cannot write " + paths.frames.string());
  }
  for (const auto& [fid, frame] : ds.frames) {
    nlohmann::json j;
    j["frame_id"] = fid;
    nlohmann::json gt = nlohmann::json::array();
    for (const GtBox& g : frame.gt) {
      gt.push_back({{"bbox", detail::bbox_to_json(g.bbox)},
                    {"person_id", g.person_id}});
    }
    j["gt"] = gt;
    frames_out << j.dump() << '\n';
  }

  std::ofstream probes_out(paths.probes, std::ios::trunc);
  if (!probes_out) {
    fail(ErrorCode::IoError, "cannot write " + paths.probes.string());
  }
  for (const std::string& pid : ds.probes) {
    probes_out << nlohmann::json{{"probe_item_id", pid}}.dump() << '\n';
  }
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset(ds, dataset_paths_in(dir));
}

/// FNV-1a fingerprint over the four dataset files, in path order.
inline std::uint64_t dataset_content_hash(const DatasetPaths& paths) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p :
       {paths.embeddings, paths.items, paths.frames, paths.probes}) {
    std::ifstream is(p, std::ios::binary);
    if (!is) {
      fail(ErrorCode::IoError, "cannot open " + p.string());
    }
    char buf[1 << 16];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
      h = fnv1a64_bytes(buf, static_cast<std::size_t>(is.gcount()), h);
    }
  }
  return h;
}

/// Probe context for `probe_id`: neighbors are every detection sharing the
/// probe's frame except the probe itself, in ascending item_id order.
inline ProbeContext build_probe_context(const Dataset& ds,
                                        const std::string& probe_id) {
  const GalleryItem* probe = ds.find_item(probe_id);
  if (probe == nullptr) {
    fail(ErrorCode::UnknownProbe, "unknown probe " + probe_id);
  }
  ProbeContext ctx;
  ctx.probe = *probe;
  for (const GalleryItem& it : ds.items) {
    if (it.frame_id == probe->frame_id && it.item_id != probe_id) {
      ctx.neighbors.push_back(it);
    }
  }
  std::sort(ctx.neighbors.begin(), ctx.neighbors.end(),
            [](const GalleryItem& a, const GalleryItem& b) {
              return a.item_id < b.item_id;
            });
  return ctx;
}

/// Seeded gallery subset for one probe.
struct GallerySubset {
  std::string probe_id;
  std::vector<std::string> gallery_item_ids;  // ascending item_id
  std::uint64_t seed = 0;
  std::size_t size = 0;
  bool degenerate = false;  // no true positives exist for the probe
};

/// Stream seed for subset sampling: FNV-1a over seed (8 bytes LE), the
/// probe_id bytes, and size (8 bytes LE).
inline std::uint64_t subset_stream_seed(std::uint64_t seed,
                                        const std::string& probe_id,
                                        std::uint64_t size) {
  unsigned char le[8];
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(seed >> (8 * i));
  h = fnv1a64_bytes(le, 8, h);
  h = fnv1a64_bytes(probe_id.data(), probe_id.size(), h);
  for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(size >> (8 * i));
  h = fnv1a64_bytes(le, 8, h);
  return h;
}

/// Samples a gallery subset of exactly `size` items: all true positives for
/// the probe outside its frame, padded with uniformly drawn other items
/// (probe-frame items are excluded from the pad pool as well, since the
/// ranking protocol would drop them anyway). The draw is a partial
/// Fisher-Yates shuffle over the pad pool sorted by item_id, using
/// CounterRng(subset_stream_seed(seed, probe_id, size)), so the same
/// (seed, probe, size) always reproduces the same subset.
inline GallerySubset sample_gallery_subset(const Dataset& ds,
                                           const std::string& probe_id,
                                           std::size_t size,
                                           std::uint64_t seed) {
  const GalleryItem* probe = ds.find_item(probe_id);
  if (probe == nullptr) {
    fail(ErrorCode::UnknownProbe, "unknown probe " + probe_id);
  }
  std::vector<std::string> positives;
  std::vector<std::string> pool;
  for (const GalleryItem& it : ds.items) {
    if (it.frame_id == probe->frame_id) {
      continue;
    }
    if (probe->person_id && it.person_id && *it.person_id == *probe->person_id) {
      positives.push_back(it.item_id);
    } else {
      pool.push_back(it.item_id);
    }
  }
  if (size < positives.size()) {
    fail(ErrorCode::SizeTooLarge,
         "subset size " + std::to_string(size) + " is smaller than the " +
             std::to_string(positives.size()) + " true positives for probe " +
             probe_id);
  }
  const std::size_t pad = size - positives.size();
  if (pad > pool.size()) {
    fail(ErrorCode::SizeTooLarge,
         "subset size " + std::to_string(size) + " exceeds the " +
             std::to_string(positives.size() + pool.size()) +
             " items available for probe " + probe_id);
  }
  std::sort(pool.begin(), pool.end());
  CounterRng rng(subset_stream_seed(seed, probe_id, size));
  for (std::size_t i = 0; i < pad; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  rng.next_below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }

  GallerySubset subset;
  subset.probe_id = probe_id;
  subset.seed = seed;
  subset.size = size;
  subset.degenerate = positives.empty();
  subset.gallery_item_ids = std::move(positives);
  subset.gallery_item_ids.insert(subset.gallery_item_ids.end(),
                                 pool.begin(), pool.begin() + pad);
  std::sort(subset.gallery_item_ids.begin(), subset.gallery_item_ids.end());
  return subset;
}

/// Detection-score histograms split by ground-truth linkage: items with a
/// person_id count as positives, the rest as distractors. Bin edges are
/// uniform on [0,1]; a score of exactly 1.0 lands in the last bin.
struct ScoreHistograms {
  std::vector<std::uint64_t> positive;
  std::vector<std::uint64_t> distractor;
  std::size_t bins = 0;
};

inline ScoreHistograms detection_score_histogram(const Dataset& ds,
                                                 std::size_t bins) {
  if (bins < 2) {
    fail(ErrorCode::InvalidArgument, "histogram needs at least 2 bins");
  }
  ScoreHistograms h;
  h.bins = bins;
  h.positive.assign(bins, 0);
  h.distractor.assign(bins, 0);
  for (const GalleryItem& it : ds.items) {
    const auto bin = std::min<std::size_t>(
        bins - 1, static_cast<std::size_t>(it.det_score * static_cast<double>(bins)));
    (it.person_id ? h.positive : h.distractor)[bin] += 1;
  }
  return h;
}

struct RepulsionCensus {
  std::uint64_t satisfied = 0;
  std::uint64_t violated = 0;
};

/// For every (probe, true-positive gallery item) pair, counts whether the
/// positive is strictly more similar to the probe than to every probe
/// neighbor, using the visual term only. Positives are taken outside the
/// probe's frame, matching the ranking protocol. Pairs with no neighbors
/// are vacuously satisfied. Counts are a function of the supplied
/// embeddings; they are not comparable across feature extractors.
inline RepulsionCensus repulsion_pair_census(const Dataset& ds) {
  RepulsionCensus census;
  for (const std::string& probe_id : ds.probes) {
    const ProbeContext ctx = build_probe_context(ds, probe_id);
    if (!ctx.probe.person_id) {
      continue;
    }
    const NormalizedQuerySet queries(ctx);
    for (const GalleryItem& it : ds.items) {
      if (it.frame_id == ctx.probe.frame_id || !it.person_id ||
          *it.person_id != *ctx.probe.person_id) {
        continue;
      }
      const Embedding g = l2_normalize(it.embedding);
      const QuerySimilarityRow row = queries.row_against(g, false);
      bool ok = true;
      for (std::size_t i = 1; i < row.size(); ++i) {
        if (row[i] >= row[0]) {
          ok = false;
          break;
        }
      }
      (ok ? census.satisfied : census.violated) += 1;
    }
  }
  return census;
}

}  // namespace orsearch
