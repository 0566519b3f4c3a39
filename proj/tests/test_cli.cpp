// End-to-end tests of the command-line tool. The binary path comes from
// the build system.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"

#ifndef ORSEARCH_CLI_PATH
#define ORSEARCH_CLI_PATH "orsearch"
#endif

namespace fs = std::filesystem;
using orsearch::testutil::TempDir;

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const fs::path out = fs::temp_directory_path() /
                       ("orsearch_cli_out_" + std::to_string(::getpid()) + ".txt");
  const std::string cmd = std::string(ORSEARCH_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream is(out);
  r.output.assign((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  fs::remove(out);
  return r;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Cli, MissingRequiredFlagExitsTwoWithUsage) {
  const CliResult r = run_cli("rank --mode or");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("--data"), std::string::npos);
  EXPECT_NE(r.output.find("Usage"), std::string::npos);
}

TEST(Cli, UnknownSubcommandExitsTwo) {
  EXPECT_EQ(run_cli("frobnicate").exit_code, 2);
}

TEST(Cli, HelpExitsZero) {
  const CliResult r = run_cli("--help");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("rank"), std::string::npos);
}

TEST(Cli, SynthRankEvalPipeline) {
  TempDir dir("cli_pipe");
  const fs::path data = dir.path() / "data";
  const fs::path cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << R"({"num_identities": 20, "embedding_dim": 16, "seed": 5})";

  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string())
                .exit_code,
            0);
  for (const char* name :
       {"embeddings.bin", "items.jsonl", "frames.jsonl", "probes.jsonl",
        "run_manifest.json", "synth_config.json"}) {
    EXPECT_TRUE(fs::exists(data / name)) << name;
  }

  const fs::path ranked = dir.path() / "ranked";
  ASSERT_EQ(run_cli("rank --data " + data.string() + " --mode or --out " +
                    ranked.string())
                .exit_code,
            0);
  EXPECT_TRUE(fs::exists(ranked / "rank_000000.tsv"));
  EXPECT_TRUE(fs::exists(ranked / "run_manifest.json"));

  const fs::path report = dir.path() / "eval.txt";
  const CliResult ev = run_cli("eval-search --data " + data.string() +
                               " --ranked " + ranked.string() +
                               " --ks 1,5 --out " + report.string());
  ASSERT_EQ(ev.exit_code, 0);
  const std::string text = file_bytes(report);
  EXPECT_NE(text.find("map\t"), std::string::npos);
  EXPECT_NE(text.find("cmc_top_1\t"), std::string::npos);
  EXPECT_NE(text.find("cmc_top_5\t"), std::string::npos);

  const fs::path det = dir.path() / "det.txt";
  ASSERT_EQ(run_cli("eval-det --data " + data.string() + " --out " + det.string())
                .exit_code,
            0);
  EXPECT_NE(file_bytes(det).find("detection_ap\t"), std::string::npos);
}

TEST(Cli, RerunWithSameSeedsIsBitwiseIdentical) {
  TempDir dir("cli_det");
  const fs::path data = dir.path() / "data";
  const fs::path cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << R"({"num_identities": 15, "embedding_dim": 8, "seed": 3})";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string())
                .exit_code,
            0);
  const fs::path data2 = dir.path() / "data2";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data2.string())
                .exit_code,
            0);
  for (const char* name :
       {"embeddings.bin", "items.jsonl", "frames.jsonl", "probes.jsonl"}) {
    EXPECT_EQ(file_bytes(data / name), file_bytes(data2 / name)) << name;
  }

  const fs::path r1 = dir.path() / "r1";
  const fs::path r2 = dir.path() / "r2";
  const std::string rank_args = "rank --data " + data.string() +
                                " --mode or --gallery-size 20 --seed 9 --out ";
  ASSERT_EQ(run_cli(rank_args + r1.string()).exit_code, 0);
  ASSERT_EQ(run_cli(rank_args + r2.string()).exit_code, 0);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(r1)) {
    if (entry.path().extension() != ".tsv") {
      continue;
    }
    ++files;
    EXPECT_EQ(file_bytes(entry.path()),
              file_bytes(r2 / entry.path().filename()));
  }
  EXPECT_EQ(files, 15u);
}

TEST(Cli, CorruptDatasetExitsThree) {
  TempDir dir("cli_bad");
  const fs::path data = dir.path() / "data";
  ASSERT_EQ(run_cli("synth --seed 2 --out " + data.string() +
                    " --config /dev/null")
                .exit_code,
            2);  // empty config file is a config error
  std::ofstream cfg(dir.path() / "cfg.json");
  cfg << R"({"num_identities": 5, "embedding_dim": 4})";
  cfg.close();
  ASSERT_EQ(run_cli("synth --config " + (dir.path() / "cfg.json").string() +
                    " --out " + data.string())
                .exit_code,
            0);
  // truncate the embedding file
  std::ofstream(data / "embeddings.bin", std::ios::binary | std::ios::trunc)
      << "ORSE";
  const CliResult r = run_cli("rank --data " + data.string() + " --out " +
                              (dir.path() / "out").string());
  EXPECT_EQ(r.exit_code, 3);
}

TEST(Cli, AblateWritesSummaryAndResults) {
  TempDir dir("cli_ablate");
  const fs::path data = dir.path() / "data";
  const fs::path cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << R"({"num_identities": 15, "embedding_dim": 8, "seed": 4})";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string())
                .exit_code,
            0);
  const fs::path out = dir.path() / "ablate";
  ASSERT_EQ(run_cli("ablate --data " + data.string() +
                    " --modes all --gallery-sizes 0,20 --seeds 1,2 --ks 1 --out " +
                    out.string())
                .exit_code,
            0);
  EXPECT_TRUE(fs::exists(out / "summary.tsv"));
  EXPECT_TRUE(fs::exists(out / "results.tsv"));
  EXPECT_TRUE(fs::exists(out / "run_manifest.json"));
  EXPECT_TRUE(fs::exists(out / "eval_or_g20_s2.txt"));
  const std::string summary = file_bytes(out / "summary.tsv");
  EXPECT_NE(summary.find("mode\tg0\tg20"), std::string::npos);
  EXPECT_NE(summary.find("visual\t"), std::string::npos);
  EXPECT_NE(summary.find("or\t"), std::string::npos);
  // 4 modes x 2 sizes x 2 seeds result rows + header
  const std::string results = file_bytes(out / "results.tsv");
  EXPECT_EQ(std::count(results.begin(), results.end(), '\n'), 17);
}

TEST(Cli, StatsWritesHistogramAndCensus) {
  TempDir dir("cli_stats");
  const fs::path data = dir.path() / "data";
  const fs::path cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << R"({"num_identities": 15, "embedding_dim": 8, "seed": 6})";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string())
                .exit_code,
            0);
  const fs::path out = dir.path() / "stats";
  ASSERT_EQ(
      run_cli("stats --data " + data.string() + " --bins 10 --out " + out.string())
          .exit_code,
      0);
  const std::string csv = file_bytes(out / "score_histogram.csv");
  EXPECT_NE(csv.find("bin_lo,bin_hi,positive,distractor"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  const std::string census = file_bytes(out / "repulsion_census.txt");
  EXPECT_NE(census.find("satisfied\t"), std::string::npos);
  EXPECT_NE(census.find("violated\t"), std::string::npos);
}

TEST(Cli, ProbesOverrideFile) {
  TempDir dir("cli_probes");
  const fs::path data = dir.path() / "data";
  const fs::path cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << R"({"num_identities": 10, "embedding_dim": 8, "seed": 8})";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string())
                .exit_code,
            0);
  const fs::path probes = dir.path() / "probes.jsonl";
  std::ofstream(probes) << R"({"probe_item_id":"i000000"})" << "\n";
  const fs::path out = dir.path() / "ranked";
  ASSERT_EQ(run_cli("rank --data " + data.string() + " --probes " +
                    probes.string() + " --out " + out.string())
                .exit_code,
            0);
  EXPECT_TRUE(fs::exists(out / "rank_000000.tsv"));
  EXPECT_FALSE(fs::exists(out / "rank_000001.tsv"));

  std::ofstream(probes) << R"({"probe_item_id":"nosuch"})" << "\n";
  EXPECT_EQ(run_cli("rank --data " + data.string() + " --probes " +
                    probes.string() + " --out " + out.string())
                .exit_code,
            2);
}
