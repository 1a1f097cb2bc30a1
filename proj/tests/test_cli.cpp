// Copyright 2026 The OrchardSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end checks of the orchardseg executable. Each case shells out to
// the real binary (path injected as ORCHARD_CLI_PATH), captures stdout and
// stderr into files, and asserts on exit codes and produced artifacts.

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "orchard/cloud.hpp"
#include "support/tempdir.hpp"

using nlohmann::json;
using testsupport::read_text;
using testsupport::TempDir;
using testsupport::write_text;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs `orchardseg <args>` through the shell. `env` may prefix variable
// assignments such as "ORCHARD_SEG_THREADS=1".
CliResult run_cli(const TempDir& dir, const std::string& tag, const std::string& args,
                  const std::string& env = "") {
  const std::string out_path = dir.file(tag + ".stdout");
  const std::string err_path = dir.file(tag + ".stderr");
  std::string cmd;
  if (!env.empty()) cmd += env + " ";
  cmd += std::string("\"") + ORCHARD_CLI_PATH + "\" " + args;
  cmd += " > \"" + out_path + "\" 2> \"" + err_path + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  r.out = read_text(out_path);
  r.err = read_text(err_path);
  return r;
}

double csv_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + ",", 0) == 0) return std::stod(line.substr(key.size() + 1));
  }
  FAIL("no '", key, "' row in:\n", text);
  return 0.0;
}

bool same_bytes(const std::string& a, const std::string& b) {
  return read_text(a) == read_text(b);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("an unknown subcommand fails with usage text") {
  TempDir dir("cli_unknown");
  const CliResult r = run_cli(dir, "run", "frobnicate");
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(r.err.find("synth") != std::string::npos);
}

TEST_CASE("help is available and exits cleanly") {
  TempDir dir("cli_help");
  const CliResult r = run_cli(dir, "run", "--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("synth") != std::string::npos);
  CHECK(r.out.find("eval") != std::string::npos);
}

TEST_CASE("missing and malformed inputs map to exit code 2") {
  TempDir dir("cli_badinput");
  const CliResult missing = run_cli(dir, "missing", "eval nope.ply nada.ply");
  CHECK(missing.code == 2);

  const std::string garbage = dir.file("garbage.ply");
  write_text(garbage, "this is not a point cloud\n");
  const CliResult corrupt =
      run_cli(dir, "corrupt", "voxelize " + garbage + " --out " + dir.file("v.ply"));
  CHECK(corrupt.code == 2);
}

TEST_CASE("block sizes outside the supported set are usage errors") {
  TempDir dir("cli_blocks");
  const CliResult r =
      run_cli(dir, "run", "train --data nowhere --out x.fpn --blocks 2048");
  CHECK(r.code == 1);
}

TEST_CASE("evaluating a prediction against itself scores a perfect mean IoU") {
  TempDir dir("cli_eval");
  const std::string scene = dir.file("scene.ply");
  const CliResult synth =
      run_cli(dir, "synth", "synth --out " + scene + " --seed 21 --density 2000");
  REQUIRE_MESSAGE(synth.code == 0, synth.err);

  const CliResult eval = run_cli(dir, "eval", "eval " + scene + " " + scene);
  REQUIRE_MESSAGE(eval.code == 0, eval.err);
  CHECK(eval.out.find("class,iou") != std::string::npos);
  CHECK(csv_value(eval.out, "0") == doctest::Approx(1.0));
  CHECK(csv_value(eval.out, "1") == doctest::Approx(1.0));
  CHECK(csv_value(eval.out, "miou") == doctest::Approx(1.0));
}

TEST_CASE("synth reruns are byte-identical per seed and differ across seeds") {
  TempDir dir("cli_synth");
  const std::string args = " --density 2000 --fruit-count 12";
  const CliResult a =
      run_cli(dir, "a", "synth --out " + dir.file("a.ply") + " --seed 4" + args);
  const CliResult b =
      run_cli(dir, "b", "synth --out " + dir.file("b.ply") + " --seed 4" + args);
  const CliResult c =
      run_cli(dir, "c", "synth --out " + dir.file("c.ply") + " --seed 5" + args);
  REQUIRE_MESSAGE(a.code == 0, a.err);
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);
  CHECK(same_bytes(dir.file("a.ply"), dir.file("b.ply")));
  CHECK_FALSE(same_bytes(dir.file("a.ply"), dir.file("c.ply")));

  const json ma = json::parse(read_text(dir.file("a.json")));
  const json mb = json::parse(read_text(dir.file("b.json")));
  CHECK(ma.at("point_total") == mb.at("point_total"));
  CHECK(ma.at("fruit_points") == mb.at("fruit_points"));
}

TEST_CASE("voxelize is deterministic under a thread cap") {
  TempDir dir("cli_voxel");
  const std::string scene = dir.file("scene.ply");
  REQUIRE(run_cli(dir, "synth", "synth --out " + scene + " --seed 8 --density 2000").code == 0);
  const orchard::PointCloud before = orchard::read_cloud(scene);

  const CliResult v1 = run_cli(
      dir, "v1", "voxelize " + scene + " --leaf 0.02 --out " + dir.file("v1.ply"));
  const CliResult v2 = run_cli(
      dir, "v2", "voxelize " + scene + " --leaf 0.02 --out " + dir.file("v2.ply"),
      "ORCHARD_SEG_THREADS=1");
  REQUIRE_MESSAGE(v1.code == 0, v1.err);
  REQUIRE(v2.code == 0);
  CHECK(same_bytes(dir.file("v1.ply"), dir.file("v2.ply")));
  const orchard::PointCloud after = orchard::read_cloud(dir.file("v1.ply"));
  CHECK(after.size() < before.size());
  CHECK(after.size() > 0);
}

TEST_CASE("partition writes leaf files and a complete manifest") {
  TempDir dir("cli_partition");
  const std::string scene = dir.file("scene.ply");
  REQUIRE(run_cli(dir, "synth", "synth --out " + scene + " --seed 3 --density 2000").code == 0);
  const orchard::PointCloud cloud = orchard::read_cloud(scene);

  const std::string out_dir = dir.file("leaves");
  const CliResult r = run_cli(
      dir, "part", "partition " + scene + " --capacity 2048 --out-dir " + out_dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);

  const json manifest = json::parse(read_text(out_dir + "/manifest.json"));
  REQUIRE(manifest.at("point_count").get<size_t>() == cloud.size());
  std::vector<int> seen(cloud.size(), 0);
  size_t total = 0;
  for (const json& leaf : manifest.at("leaves")) {
    const size_t count = leaf.at("count").get<size_t>();
    CHECK(count <= 2048);
    CHECK_FALSE(leaf.at("oversized").get<bool>());
    total += count;
    for (const int idx : leaf.at("indices")) seen[static_cast<size_t>(idx)] += 1;
  }
  CHECK(total == cloud.size());
  CHECK(std::count(seen.begin(), seen.end(), 1) == static_cast<long>(cloud.size()));

  const std::string first =
      manifest.at("leaves").at(0).at("file").get<std::string>();
  const orchard::PointCloud leaf0 = orchard::read_cloud(out_dir + "/" + first);
  CHECK(leaf0.size() == manifest.at("leaves").at(0).at("count").get<size_t>());
  CHECK(leaf0.has_labels());
}

TEST_CASE("colorize looks pixel colors up through the calibration") {
  TempDir dir("cli_colorize");
  orchard::PointCloud cloud;
  cloud.positions = {{-0.25, -0.25, 1.0}, {0.75, -0.25, 1.0}, {-0.25, 0.75, 1.0},
                     {0.75, 0.75, 1.0}, {0.0, 0.0, -1.0}};
  const std::string in_path = dir.file("bare.ply");
  orchard::write_cloud(cloud, in_path);

  const std::string calib = dir.file("calib.txt");
  write_text(calib,
             "fx = 1\nfy = 1\ncx = 0.5\ncy = 0.5\nwidth = 2\nheight = 2\n"
             "extrinsic = 1 0 0 0  0 1 0 0  0 0 1 0\n");
  const std::string image = dir.file("img.ppm");
  write_text(image,
             "P3\n2 2\n255\n"
             "255 0 0  0 255 0\n"
             "0 0 255  255 255 255\n");

  const std::string out_path = dir.file("colored.ply");
  const CliResult r = run_cli(dir, "run", "colorize " + in_path + " --calib " + calib +
                                              " --image " + image + " --out " + out_path);
  REQUIRE_MESSAGE(r.code == 0, r.err);

  const orchard::PointCloud colored = orchard::read_cloud(out_path);
  REQUIRE(colored.size() == 4);  // the point behind the camera is dropped
  REQUIRE(colored.has_colors());
  CHECK(colored.colors[0].x == doctest::Approx(1.0));
  CHECK(colored.colors[0].y == doctest::Approx(0.0));
  CHECK(colored.colors[1].y == doctest::Approx(1.0));
  CHECK(colored.colors[2].z == doctest::Approx(1.0));
  CHECK(colored.colors[3].x == doctest::Approx(1.0));
  CHECK(colored.colors[3].y == doctest::Approx(1.0));
}

TEST_CASE("make-dataset rebuilds identical crops per seed") {
  TempDir dir("cli_dataset");
  const std::string scene = dir.file("scene.ply");
  REQUIRE(run_cli(dir, "synth", "synth --out " + scene + " --seed 6 --density 2000").code == 0);

  const std::string cfg = dir.file("blocks.cfg");
  write_text(cfg, "[network]\nblock_size = 512\n\n[train]\nmin_fruit_points = 40\n");
  const std::string args = "make-dataset " + scene + " --seeds-per-scene 25 --seed 9 --config " +
                           cfg + " --out-dir ";
  const CliResult d1 = run_cli(dir, "d1", args + dir.file("data1"));
  const CliResult d2 = run_cli(dir, "d2", args + dir.file("data2"));
  REQUIRE_MESSAGE(d1.code == 0, d1.err);
  REQUIRE(d2.code == 0);

  const json manifest = json::parse(read_text(dir.file("data1") + "/manifest.json"));
  REQUIRE(manifest.at("blocks").size() > 0);
  CHECK(manifest.at("block_size") == 512);
  for (const json& entry : manifest.at("blocks")) {
    CHECK(entry.at("fruit_points").get<int>() >= 40);
  }
  CHECK(same_bytes(dir.file("data1") + "/manifest.json", dir.file("data2") + "/manifest.json"));
  CHECK(same_bytes(dir.file("data1") + "/block_00000.ply",
                   dir.file("data2") + "/block_00000.ply"));
}

TEST_CASE("the smoke pipeline trains, labels a fresh scene, and reproduces itself") {
  TempDir dir("cli_smoke");
  const std::string cfg = dir.file("smoke.cfg");
  write_text(cfg,
             "[network]\n"
             "preset = reduced\n"
             "block_size = 1024\n"
             "fusion = early+late\n"
             "\n"
             "[train]\n"
             "epochs = 10\n"
             "batch_size = 8\n"
             "lr0 = 0.005\n"
             "alpha_nobj = 0.75\n"
             "alpha_obj = 1.25\n"
             "min_fruit_points = 60\n"
             "seed = 11\n");

  const std::string train_scene = dir.file("train_scene.ply");
  const std::string eval_scene = dir.file("eval_scene.ply");
  REQUIRE(run_cli(dir, "synth_a",
                  "synth --out " + train_scene + " --seed 11 --density 6000").code == 0);
  REQUIRE(run_cli(dir, "synth_b",
                  "synth --out " + eval_scene + " --seed 12 --density 6000").code == 0);

  const std::string data_dir = dir.file("data");
  const CliResult made =
      run_cli(dir, "dataset", "make-dataset " + train_scene + " --seeds-per-scene 40 --seed 5" +
                                  " --config " + cfg + " --out-dir " + data_dir);
  REQUIRE_MESSAGE(made.code == 0, made.err);
  const json manifest = json::parse(read_text(data_dir + "/manifest.json"));
  REQUIRE_MESSAGE(manifest.at("blocks").size() >= 10, "kept only ",
                  manifest.at("blocks").size(), " crops");

  const std::string train_args =
      "train --data " + data_dir + " --config " + cfg + " --out ";
  const CliResult trained = run_cli(dir, "train1", train_args + dir.file("model.fpn"));
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  const json train_report = json::parse(trained.out);
  CHECK(train_report.at("best_val_miou").get<double>() > 0.5);

  // Same data and seed, fresh process: the checkpoint must not drift.
  const CliResult retrained = run_cli(dir, "train2", train_args + dir.file("model2.fpn"));
  REQUIRE(retrained.code == 0);
  CHECK(same_bytes(dir.file("model.fpn"), dir.file("model2.fpn")));

  const std::string infer_args = "infer " + eval_scene + " --config " + cfg +
                                 " --checkpoint " + dir.file("model.fpn") + " --seed 17 --out ";
  const CliResult labeled = run_cli(dir, "infer1", infer_args + dir.file("pred.ply"));
  REQUIRE_MESSAGE(labeled.code == 0, labeled.err);
  const CliResult relabeled =
      run_cli(dir, "infer2", infer_args + dir.file("pred2.ply"), "ORCHARD_SEG_THREADS=1");
  REQUIRE(relabeled.code == 0);
  CHECK(same_bytes(dir.file("pred.ply"), dir.file("pred2.ply")));

  const CliResult eval = run_cli(dir, "eval", "eval " + eval_scene + " " + dir.file("pred.ply"));
  REQUIRE_MESSAGE(eval.code == 0, eval.err);
  const double miou = csv_value(eval.out, "miou");
  CHECK(miou >= 0.85);

  const CliResult reeval =
      run_cli(dir, "eval2", "eval " + eval_scene + " " + dir.file("pred2.ply"));
  REQUIRE(reeval.code == 0);
  CHECK(reeval.out == eval.out);

  // An octree capacity above the block size cannot be chunked for the net.
  const CliResult too_big = run_cli(
      dir, "toobig", "infer " + eval_scene + " --config " + cfg + " --checkpoint " +
                         dir.file("model.fpn") + " --capacity 2048 --out " + dir.file("x.ply"));
  CHECK(too_big.code == 2);
}

}  // TEST_SUITE
