#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "usamkit/bayes.hpp"
#include "usamkit/cli.hpp"
#include "usamkit/io.hpp"
#include "usamkit/kernels.hpp"
#include "usamkit/mask.hpp"

using namespace usamkit;

namespace {

namespace fs = std::filesystem;

// run_cli talks to stdout/stderr; capture both to keep the test log clean.
struct Capture {
  std::ostringstream out, err;
  std::streambuf* old_out;
  std::streambuf* old_err;
  Capture()
      : old_out(std::cout.rdbuf(out.rdbuf())),
        old_err(std::cerr.rdbuf(err.rdbuf())) {}
  ~Capture() {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
  }
};

int run(const std::vector<std::string>& args, std::string* out = nullptr,
        std::string* err = nullptr) {
  Capture cap;
  const int code = run_cli(args);
  if (out) *out = cap.out.str();
  if (err) *err = cap.err.str();
  return code;
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    size_t pos = 0;
    while (true) {
      const size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::vector<std::string> tiny_world_flags() {
  return {"--world.height", "16", "--world.width", "16"};
}

void append(std::vector<std::string>& args, const std::vector<std::string>& more) {
  args.insert(args.end(), more.begin(), more.end());
}

}  // namespace

TEST_CASE("cli: help exits zero, bad invocations do not") {
  std::string out;
  CHECK(run({"--help"}, &out) == 0);
  for (const char* sub : {"generate", "bayes", "train", "eval", "correlate",
                          "ablate", "bench", "export"})
    CHECK(out.find(sub) != std::string::npos);

  CHECK(run({"generate", "--help"}, &out) == 0);
  CHECK(out.find("--world.ambiguity") != std::string::npos);

  CHECK(run({}) != 0);
  CHECK(run({"generate", "--out", "/tmp/x", "--unknown-flag"}) != 0);
  CHECK(run({"no_such_command"}) != 0);
}

TEST_CASE("cli: generate writes header plus n lines, deterministically") {
  TmpDir tmp("usamkit_cli_gen");
  std::vector<std::string> args = {"generate", "--out", tmp.sub("a"),
                                   "--n", "5", "--seed", "11",
                                   "--grid", "train", "--n-prompts", "2"};
  append(args, tiny_world_flags());
  REQUIRE(run(args) == 0);
  const std::string a = slurp(tmp.sub("a") + "/records.jsonl");
  CHECK(count_lines(a) == 6);

  args[2] = tmp.sub("b");
  REQUIRE(run(args) == 0);
  CHECK(slurp(tmp.sub("b") + "/records.jsonl") == a);

  std::string err;
  std::vector<std::string> bad = {"generate", "--out", tmp.sub("c"), "--n", "0"};
  CHECK(run(bad, nullptr, &err) != 0);
  CHECK(err.find("--n must be at least 1") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.sub("c") + "/records.jsonl"));

  // Manifest precedes the records and lists them.
  const std::string manifest = slurp(tmp.sub("a") + "/manifest.json");
  CHECK(manifest.find("\"records.jsonl\"") != std::string::npos);
  CHECK(manifest.find("config_digest") != std::string::npos);
}

TEST_CASE("cli: noiseless full-grid records make bayes report zero everywhere") {
  TmpDir tmp("usamkit_cli_noiseless");
  std::vector<std::string> args = {
      "generate", "--out", tmp.sub("gen"), "--n", "3", "--seed", "2",
      "--n-prompts", "2", "--world.model-noise", "0", "0", "0", "0",
      "--world.ambiguity", "0", "--world.score-noise", "0"};
  append(args, tiny_world_flags());
  REQUIRE(run(args) == 0);
  REQUIRE(run({"bayes", "--records", tmp.sub("gen") + "/records.jsonl",
               "--out", tmp.sub("uq")}) == 0);

  const auto rows = parse_csv(tmp.sub("uq") + "/uncertainty.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"image_id", "h_y", "h_theta",
                                            "h_xp", "h_a", "h_std",
                                            "inv_sam_score"});
  for (size_t r = 1; r < rows.size(); ++r)
    for (size_t c = 1; c < rows[r].size(); ++c) {
      INFO(rows[0][c] << " of " << rows[r][0]);
      CHECK(std::stod(rows[r][c]) <= 1e-6);
    }
}

TEST_CASE("cli: bayes rows equal direct library evaluation") {
  TmpDir tmp("usamkit_cli_bayes");
  std::vector<std::string> args = {"generate", "--out", tmp.sub("gen"),
                                   "--n", "4", "--seed", "19",
                                   "--grid", "train", "--n-prompts", "2"};
  append(args, tiny_world_flags());
  REQUIRE(run(args) == 0);
  REQUIRE(run({"bayes", "--records", tmp.sub("gen") + "/records.jsonl",
               "--out", tmp.sub("uq")}) == 0);

  const auto sets = read_records(tmp.sub("gen") + "/records.jsonl");
  const auto rows = parse_csv(tmp.sub("uq") + "/uncertainty.csv");
  REQUIRE(rows.size() == sets.size() + 1);
  for (size_t i = 0; i < sets.size(); ++i) {
    const SampleSet& set = sets[i];
    const auto& row = rows[i + 1];
    REQUIRE(row.size() == 7);
    CHECK(row[0] == set.image_id);
    // Grid entropies need the augmentation sweep the train grid lacks.
    CHECK(row[1] == "nan");
    CHECK(row[3] == "nan");
    CHECK(row[2] == fmt_double(epistemic_entropy(set, 0, set.gt).value));
    CHECK(row[4] == fmt_double(task_entropy(set, 0, ModelId::T).value));

    const SampleRecord* sel = nullptr;
    for (const SampleRecord& r : set.records) {
      if (r.config.aug_index != 0 || r.config.model != ModelId::T ||
          r.config.prompt_index != 0)
        continue;
      if (!sel || r.sam_score > sel->sam_score) sel = &r;
    }
    REQUIRE(sel != nullptr);
    CHECK(row[5] ==
          fmt_double(mean_mask_entropy(sel->mask, threshold(sel->mask)).value));
    CHECK(row[6] == fmt_double(1.0 - sel->sam_score));
  }
}

TEST_CASE("cli: train + eval produce stable tables with envelope rows pinned") {
  TmpDir tmp("usamkit_cli_eval");
  std::vector<std::string> args = {"generate", "--out", tmp.sub("gen"),
                                   "--n", "8", "--seed", "23",
                                   "--grid", "train", "--n-prompts", "2"};
  append(args, tiny_world_flags());
  REQUIRE(run(args) == 0);
  const std::string records = tmp.sub("gen") + "/records.jsonl";
  REQUIRE(run({"train", "--records", records, "--out", tmp.sub("tr"),
               "--seed", "5", "--epochs", "6", "--batch", "16",
               "--hidden", "8"}) == 0);
  const std::string heads = tmp.sub("tr") + "/heads";

  const std::vector<std::string> eval_args = {
      "eval", "--records", records, "--heads", heads,
      "--scenario", "model-swap", "--out", tmp.sub("ev1"), "--svg"};
  REQUIRE(run(eval_args) == 0);
  auto again = eval_args;
  again[8] = tmp.sub("ev2");
  REQUIRE(run(again) == 0);
  CHECK(slurp(tmp.sub("ev1") + "/curves.csv") ==
        slurp(tmp.sub("ev2") + "/curves.csv"));
  CHECK(slurp(tmp.sub("ev1") + "/rel_auc.csv") ==
        slurp(tmp.sub("ev2") + "/rel_auc.csv"));

  const auto curves = parse_csv(tmp.sub("ev1") + "/curves.csv");
  REQUIRE(curves.size() >= 2);
  CHECK(curves[0].front() == "ratio");
  CHECK(curves[0].back() == "worst");
  CHECK(curves[0][curves[0].size() - 2] == "oracle");
  // Train-grid records cannot score the full-sweep entropies.
  for (const std::string& name : curves[0]) {
    CHECK(name != "h_y");
    CHECK(name != "h_xp");
  }
  CHECK(curves[0][1] == "h_std");
  CHECK(curves.size() == size_t(8 + 1 + 1));
  CHECK(curves[1][0] == "0");
  CHECK(curves.back()[0] == "1");

  const auto table = parse_csv(tmp.sub("ev1") + "/rel_auc.csv");
  REQUIRE(table.size() == curves[0].size());
  CHECK(table[0] == std::vector<std::string>{"method", "rel_auc_percent"});
  bool saw_oracle = false, saw_worst = false;
  for (const auto& row : table) {
    if (row[0] == "oracle") {
      CHECK(row[1] == "100.00");
      saw_oracle = true;
    }
    if (row[0] == "worst") {
      CHECK(row[1] == "0.00");
      saw_worst = true;
    }
  }
  CHECK(saw_oracle);
  CHECK(saw_worst);

  const std::string svg = slurp(tmp.sub("ev1") + "/curves.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("oracle") != std::string::npos);

  // Underscore spelling of the scenario flag is accepted too.
  REQUIRE(run({"eval", "--records", records, "--scenario", "task_supervise",
               "--out", tmp.sub("ev3")}) == 0);
  const auto bare = parse_csv(tmp.sub("ev3") + "/curves.csv");
  for (const std::string& name : bare[0]) CHECK(name.rfind("usam", 0) != 0);

  std::string err;
  CHECK(run({"eval", "--records", records, "--scenario", "bogus", "--out",
             tmp.sub("ev4")}, nullptr, &err) != 0);
  CHECK(err.find("unknown scenario 'bogus'") != std::string::npos);
}

TEST_CASE("cli: thread cap env is honoured") {
  setenv("USAMKIT_THREADS", "1", 1);
  std::string out;
  CHECK(run({"--help"}, &out) == 0);
  CHECK(max_threads() == 1);
  unsetenv("USAMKIT_THREADS");
  set_thread_cap(0);
}
