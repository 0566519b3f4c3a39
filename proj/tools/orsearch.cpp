// Command-line driver: synthetic benchmark generation, ranking, search and
// detection evaluation, ablation sweeps, and dataset statistics.
//
// Exit codes: 0 success, 2 usage or validation error, 3 data-format error,
// 4 internal invariant violation.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "orsearch/core.hpp"
#include "orsearch/dataset.hpp"
#include "orsearch/engine.hpp"
#include "orsearch/eval.hpp"
#include "orsearch/manifest.hpp"
#include "orsearch/oracle.hpp"
#include "orsearch/parallel.hpp"
#include "orsearch/ranking.hpp"
#include "orsearch/similarity.hpp"
#include "orsearch/synth.hpp"

namespace fs = std::filesystem;
using namespace orsearch;

namespace {

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

unsigned resolve_threads(unsigned flag_value) {
  if (flag_value > 0) {
    return flag_value;
  }
  if (const char* env = std::getenv("OR_RANK_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) {
      return static_cast<unsigned>(v);
    }
  }
  return default_thread_count();
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> load_probe_list(const Dataset& ds,
                                         const std::string& probes_file) {
  std::vector<std::string> probes;
  if (probes_file.empty()) {
    probes = ds.probes;
  } else {
    std::ifstream is(probes_file);
    if (!is) {
      fail(ErrorCode::IoError, "cannot open " + probes_file);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("probe_item_id")) {
        fail(ErrorCode::FormatError, probes_file + ":" + std::to_string(line_no) +
                                         ": expected {\"probe_item_id\": ...}");
      }
      probes.push_back(j["probe_item_id"].get<std::string>());
    }
  }
  std::sort(probes.begin(), probes.end());
  probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
  for (const std::string& p : probes) {
    if (ds.find_item(p) == nullptr) {
      fail(ErrorCode::UnknownProbe, "probe " + p + " is not in the dataset");
    }
  }
  if (probes.empty()) {
    fail(ErrorCode::InvalidArgument, "no probes to rank");
  }
  return probes;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    fail(ErrorCode::IoError, "cannot write " + path.string());
  }
  os << content;
}

std::vector<RankedList> read_ranked_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) {
    fail(ErrorCode::IoError, dir.string() + " is not a directory");
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tsv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RankedList> lists;
  for (const fs::path& f : files) {
    std::ifstream is(f);
    if (!is) {
      fail(ErrorCode::IoError, "cannot open " + f.string());
    }
    std::vector<RankedList> part = read_ranked_lists(is);
    for (RankedList& list : part) {
      lists.push_back(std::move(list));
    }
  }
  if (lists.empty()) {
    fail(ErrorCode::InvalidArgument,
         "no ranked lists found under " + dir.string());
  }
  return lists;
}

std::string eval_report_text(const EvalReport& report, std::uint64_t dataset_hash,
                             std::uint64_t config_hash) {
  std::ostringstream os;
  os << "tool_version\t" << kVersion << '\n';
  os << "dataset_hash\t" << hex64(dataset_hash) << '\n';
  os << "config_hash\t" << hex64(config_hash) << '\n';
  write_eval_report(os, report);
  return os.str();
}

// ---------------------------------------------------------------------------
// rank
// ---------------------------------------------------------------------------

struct RankArgs {
  std::string data;
  std::string probes_file;
  std::string mode = "or";
  std::size_t gallery_size = 0;
  std::uint64_t seed = 1;
  std::size_t top_k = 0;
  double min_neighbor_score = 0.0;
  bool include_probe_frame = false;
  unsigned threads = 0;
  std::string out;
};

int run_rank(const RankArgs& args) {
  const WallClock clock;
  const Dataset ds = load_dataset(fs::path(args.data));
  const std::vector<std::string> probes = load_probe_list(ds, args.probes_file);

  RankOptions opts;
  opts.mode = parse_mode(args.mode);
  opts.exclude_probe_frame = !args.include_probe_frame;
  opts.gallery_size = args.gallery_size;
  opts.seed = args.seed;
  opts.top_k = args.top_k;
  opts.min_neighbor_det_score = args.min_neighbor_score;
  opts.threads = resolve_threads(args.threads);

  const std::vector<RankedList> ranked = rank_probes(ds, probes, opts);

  fs::create_directories(args.out);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "rank_%06zu.tsv", i);
    std::ostringstream os;
    write_ranked_list(os, ranked[i]);
    write_text_file(fs::path(args.out) / name, os.str());
  }

  RunManifest manifest;
  manifest.command = "rank";
  manifest.config_hash = fnv1a64(
      "rank|mode=" + args.mode + "|gallery_size=" + std::to_string(args.gallery_size) +
      "|seed=" + std::to_string(args.seed) + "|top_k=" + std::to_string(args.top_k) +
      "|min_neighbor_score=" + std::to_string(args.min_neighbor_score) +
      "|include_probe_frame=" + std::to_string(args.include_probe_frame) +
      "|probes=" + args.probes_file);
  manifest.dataset_hash = dataset_content_hash(dataset_paths_in(args.data));
  manifest.seeds = {args.seed};
  manifest.wall_time_seconds = clock.seconds();
  write_manifest(args.out, manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// eval-search / eval-det
// ---------------------------------------------------------------------------

struct EvalSearchArgs {
  std::string data;
  std::string ranked;
  std::vector<std::size_t> ks{1, 5, 10};
  double iou_threshold = 0.5;
  std::string out;
};

int run_eval_search(const EvalSearchArgs& args) {
  const Dataset ds = load_dataset(fs::path(args.data));
  const std::vector<RankedList> ranked = read_ranked_dir(args.ranked);
  const EvalReport report = evaluate_search(ranked, ds, args.ks, args.iou_threshold);
  std::string ks_txt;
  for (std::size_t k : args.ks) {
    ks_txt += std::to_string(k) + ",";
  }
  const std::uint64_t config_hash =
      fnv1a64("eval-search|ks=" + ks_txt + "|iou=" + std::to_string(args.iou_threshold));
  write_text_file(args.out,
                  eval_report_text(report,
                                   dataset_content_hash(dataset_paths_in(args.data)),
                                   config_hash));
  std::cout << "map " << format_score(report.map_score) << " over "
            << report.num_probes << " probes (" << report.num_skipped
            << " skipped)\n";
  return 0;
}

struct EvalDetArgs {
  std::string data;
  double iou_threshold = 0.5;
  std::string out;
};

int run_eval_det(const EvalDetArgs& args) {
  const Dataset ds = load_dataset(fs::path(args.data));
  const DetectionReport report = evaluate_detection(ds.items, ds, args.iou_threshold);
  std::ostringstream os;
  os << "tool_version\t" << kVersion << '\n';
  os << "dataset_hash\t" << hex64(dataset_content_hash(dataset_paths_in(args.data)))
     << '\n';
  write_detection_report(os, report);
  write_text_file(args.out, os.str());
  std::cout << "detection ap " << format_score(report.ap) << " recall "
            << format_score(report.recall) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string data;
  std::vector<std::string> modes{"all"};
  std::vector<std::size_t> gallery_sizes{0};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::size_t> ks{1, 5, 10};
  double iou_threshold = 0.5;
  unsigned threads = 0;
  std::string out;
};

// The combined score must always factor exactly into its terms; a breakage
// here means the scoring pipeline itself is corrupt, which is exit code 4.
void check_mode_consistency(const Dataset& ds, const std::string& probe_id) {
  const ProbeContext ctx = build_probe_context(ds, probe_id);
  std::size_t checked = 0;
  for (const GalleryItem& item : ds.items) {
    if (item.frame_id == ctx.probe.frame_id) {
      continue;
    }
    const ScoreBreakdown v_or = or_score(ctx, item, ScoringMode::VisualOR);
    const ScoreBreakdown v_o = or_score(ctx, item, ScoringMode::VisualO);
    const ScoreBreakdown v_r = or_score(ctx, item, ScoringMode::VisualR);
    if (std::abs(v_or.combined - v_o.combined * v_or.repulsion) > 1e-12 ||
        std::abs(v_or.combined - v_r.combined * v_or.objectness) > 1e-12) {
      fail(ErrorCode::Internal,
           "mode-consistency violation on probe " + probe_id + " item " +
               item.item_id);
    }
    if (++checked >= 64) {
      break;
    }
  }
}

int run_ablate(const AblateArgs& args) {
  const WallClock clock;
  const Dataset ds = load_dataset(fs::path(args.data));
  const std::uint64_t dataset_hash = dataset_content_hash(dataset_paths_in(args.data));

  std::vector<ScoringMode> modes;
  if (args.modes.size() == 1 && args.modes[0] == "all") {
    modes = {ScoringMode::Visual, ScoringMode::VisualO, ScoringMode::VisualR,
             ScoringMode::VisualOR};
  } else {
    for (const std::string& m : args.modes) {
      modes.push_back(parse_mode(m));
    }
  }

  fs::create_directories(args.out);
  std::ostringstream results;
  results << "mode\tgallery_size\tseed\tmap";
  for (std::size_t k : args.ks) {
    results << "\tcmc_top_" << k;
  }
  results << '\n';

  // mode -> size -> mAP values over seeds
  std::map<std::string, std::map<std::size_t, std::vector<double>>> sweep;

  for (const ScoringMode mode : modes) {
    for (const std::size_t size : args.gallery_sizes) {
      for (const std::uint64_t seed : args.seeds) {
        RankOptions opts;
        opts.mode = mode;
        opts.gallery_size = size;
        opts.seed = seed;
        opts.threads = resolve_threads(args.threads);
        const std::vector<RankedList> ranked = rank_probes(ds, ds.probes, opts);
        const EvalReport report =
            evaluate_search(ranked, ds, args.ks, args.iou_threshold);

        char name[64];
        std::snprintf(name, sizeof(name), "eval_%s_g%zu_s%llu.txt",
                      to_string(mode), size,
                      static_cast<unsigned long long>(seed));
        write_text_file(fs::path(args.out) / name,
                        eval_report_text(report, dataset_hash, 0));

        results << to_string(mode) << '\t' << size << '\t' << seed << '\t'
                << format_score(report.map_score);
        for (const auto& [k, rate] : report.cmc) {
          results << '\t' << format_score(rate);
        }
        results << '\n';
        sweep[to_string(mode)][size].push_back(report.map_score);
      }
      check_mode_consistency(ds, ds.probes.front());
    }
  }

  write_text_file(fs::path(args.out) / "results.tsv", results.str());

  // summary: one row per mode, one column per gallery size, mean mAP
  std::ostringstream summary;
  summary << "mode";
  for (const std::size_t size : args.gallery_sizes) {
    summary << "\tg" << size;
  }
  summary << '\n';
  for (const ScoringMode mode : modes) {
    summary << to_string(mode);
    for (const std::size_t size : args.gallery_sizes) {
      const std::vector<double>& values = sweep[to_string(mode)][size];
      double mean = 0.0;
      for (const double v : values) {
        mean += v;
      }
      mean /= static_cast<double>(values.size());
      summary << '\t' << format_score(mean);
    }
    summary << '\n';
  }
  write_text_file(fs::path(args.out) / "summary.tsv", summary.str());

  RunManifest manifest;
  manifest.command = "ablate";
  manifest.dataset_hash = dataset_hash;
  std::string cfg = "ablate|modes=";
  for (const ScoringMode m : modes) cfg += std::string(to_string(m)) + ",";
  cfg += "|sizes=";
  for (const std::size_t s : args.gallery_sizes) cfg += std::to_string(s) + ",";
  cfg += "|iou=" + std::to_string(args.iou_threshold);
  manifest.config_hash = fnv1a64(cfg);
  manifest.seeds = args.seeds;
  manifest.wall_time_seconds = clock.seconds();
  write_manifest(args.out, manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string data;
  std::size_t bins = 20;
  std::string out;
};

int run_stats(const StatsArgs& args) {
  const WallClock clock;
  const Dataset ds = load_dataset(fs::path(args.data));
  const ScoreHistograms hist = detection_score_histogram(ds, args.bins);

  std::ostringstream csv;
  csv << "bin_lo,bin_hi,positive,distractor\n";
  for (std::size_t b = 0; b < hist.bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(hist.bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(hist.bins);
    csv << format_score(lo) << ',' << format_score(hi) << ',' << hist.positive[b]
        << ',' << hist.distractor[b] << '\n';
  }
  fs::create_directories(args.out);
  write_text_file(fs::path(args.out) / "score_histogram.csv", csv.str());

  const RepulsionCensus census = repulsion_pair_census(ds);
  std::ostringstream census_txt;
  census_txt << "# (probe, true-positive) pairs where the positive is strictly\n"
             << "# closer to the probe than to every probe neighbor. Counts are\n"
             << "# a function of the supplied embeddings and detections; they\n"
             << "# are not comparable across feature extractors.\n"
             << "satisfied\t" << census.satisfied << '\n'
             << "violated\t" << census.violated << '\n';
  write_text_file(fs::path(args.out) / "repulsion_census.txt", census_txt.str());

  RunManifest manifest;
  manifest.command = "stats";
  manifest.dataset_hash = dataset_content_hash(dataset_paths_in(args.data));
  manifest.config_hash = fnv1a64("stats|bins=" + std::to_string(args.bins));
  manifest.wall_time_seconds = clock.seconds();
  write_manifest(args.out, manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config_file;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
};

int run_synth(const SynthArgs& args) {
  const WallClock clock;
  SynthConfig cfg;
  if (!args.config_file.empty()) {
    std::ifstream is(args.config_file);
    if (!is) {
      fail(ErrorCode::IoError, "cannot open " + args.config_file);
    }
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) {
      fail(ErrorCode::ConfigError, args.config_file + ": malformed JSON");
    }
    cfg = SynthConfig::from_json(j);
  }
  if (args.seed_given) {
    cfg.seed = args.seed;
  }
  const Dataset ds = generate(cfg);
  fs::create_directories(args.out);
  save_dataset(ds, fs::path(args.out));
  write_text_file(fs::path(args.out) / "synth_config.json",
                  cfg.to_json().dump(2) + "\n");

  RunManifest manifest;
  manifest.command = "synth";
  manifest.config_hash = fnv1a64(cfg.to_json().dump());
  manifest.dataset_hash = dataset_content_hash(dataset_paths_in(args.out));
  manifest.seeds = {cfg.seed};
  manifest.wall_time_seconds = clock.seconds();
  write_manifest(args.out, manifest);
  std::cout << "generated " << ds.items.size() << " detections, "
            << ds.frames.size() << " frames, " << ds.probes.size() << " probes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Objectness- and repulsion-weighted similarity engine for "
               "detection-based person search"};
  app.require_subcommand(1);

  RankArgs rank_args;
  auto* rank = app.add_subcommand(
      "rank", "Rank the gallery for every probe and write per-probe lists");
  rank->add_option("--data", rank_args.data, "dataset directory")->required();
  rank->add_option("--probes", rank_args.probes_file,
                   "probe list override (JSONL, {\"probe_item_id\": ...})");
  rank->add_option("--mode", rank_args.mode, "scoring mode: visual|o|r|or")
      ->check(CLI::IsMember({"visual", "o", "r", "or"}));
  rank->add_option("--gallery-size", rank_args.gallery_size,
                   "per-probe sampled gallery size (0 = full gallery)");
  rank->add_option("--seed", rank_args.seed, "subset sampling seed");
  rank->add_option("--top-k", rank_args.top_k, "truncate lists to K entries (0 = keep all)");
  rank->add_option("--min-neighbor-score", rank_args.min_neighbor_score,
                   "drop probe neighbors below this detection score");
  rank->add_flag("--include-probe-frame", rank_args.include_probe_frame,
                 "search the probe's own frame as well");
  rank->add_option("--threads", rank_args.threads,
                   "worker threads (default: OR_RANK_THREADS or hardware)");
  rank->add_option("--out", rank_args.out, "output directory")->required();

  EvalSearchArgs es_args;
  auto* es = app.add_subcommand("eval-search", "Score ranked lists against ground truth");
  es->add_option("--data", es_args.data, "dataset directory")->required();
  es->add_option("--ranked", es_args.ranked, "directory of ranked .tsv files")->required();
  es->add_option("--ks", es_args.ks, "CMC cutoffs")->delimiter(',');
  es->add_option("--iou", es_args.iou_threshold, "IoU matching threshold");
  es->add_option("--out", es_args.out, "report file")->required();

  EvalDetArgs ed_args;
  auto* ed = app.add_subcommand("eval-det", "Detection AP and recall of the dataset");
  ed->add_option("--data", ed_args.data, "dataset directory")->required();
  ed->add_option("--iou", ed_args.iou_threshold, "IoU matching threshold");
  ed->add_option("--out", ed_args.out, "report file")->required();

  AblateArgs ab_args;
  auto* ab = app.add_subcommand(
      "ablate", "Sweep modes x gallery sizes x seeds and summarize mAP");
  ab->add_option("--data", ab_args.data, "dataset directory")->required();
  ab->add_option("--modes", ab_args.modes, "all or a list of visual|o|r|or")
      ->delimiter(',');
  ab->add_option("--gallery-sizes", ab_args.gallery_sizes,
                 "per-probe gallery sizes (0 = full)")
      ->delimiter(',');
  ab->add_option("--seeds", ab_args.seeds, "subset sampling seeds")->delimiter(',');
  ab->add_option("--ks", ab_args.ks, "CMC cutoffs")->delimiter(',');
  ab->add_option("--iou", ab_args.iou_threshold, "IoU matching threshold");
  ab->add_option("--threads", ab_args.threads, "worker threads");
  ab->add_option("--out", ab_args.out, "output directory")->required();

  StatsArgs st_args;
  auto* st = app.add_subcommand(
      "stats", "Detection-score histograms and the repulsion pair census");
  st->add_option("--data", st_args.data, "dataset directory")->required();
  st->add_option("--bins", st_args.bins, "histogram bins");
  st->add_option("--out", st_args.out, "output directory")->required();

  SynthArgs sy_args;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
  sy->add_option("--config", sy_args.config_file, "generator config (JSON)");
  auto* seed_opt = sy->add_option("--seed", sy_args.seed, "override the config seed");
  sy->add_option("--out", sy_args.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << '\n';
    return 2;
  }
  sy_args.seed_given = seed_opt->count() > 0;

  try {
    if (rank->parsed()) return run_rank(rank_args);
    if (es->parsed()) return run_eval_search(es_args);
    if (ed->parsed()) return run_eval_det(ed_args);
    if (ab->parsed()) return run_ablate(ab_args);
    if (st->parsed()) return run_stats(st_args);
    if (sy->parsed()) return run_synth(sy_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::Internal) {
      return 4;
    }
    return e.is_data_error() ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
  return 2;
}
