#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "doctest.h"
#include "ffc/data.hpp"
#include "ffc/formats.hpp"
#include "json.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("ffc-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result ffc_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = ffc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

std::string str(const fs::path& p) { return p.string(); }

// Small planted dataset plus a trained MLP under `dir`.
void make_fixture(const fs::path& dir) {
  REQUIRE(ffc_run({"dataset-gen", "--out", str(dir), "--seed", "3", "--size", "8", "--classes", "2", "--frequencies",
                   "1", "--train-per-class", "10", "--eval-per-class", "4"})
              .code == 0);
  REQUIRE(ffc_run({"train", "--out", str(dir), "--seed", "3", "--data", str(dir / "planted-train.idx"), "--eval",
                   str(dir / "planted-eval.idx"), "--hidden", "8", "--epochs", "3"})
              .code == 0);
}

std::vector<std::string> pipeline(const fs::path& dir) {
  const std::string model = str(dir / "model.ckpt"), data = str(dir / "planted-eval.idx");
  std::vector<std::string> failures;
  const std::vector<std::vector<std::string>> steps{
      {"attribute", "--out", str(dir), "--model", model, "--data", data, "--method", "ffc,random,fft_of:intgrad",
       "--lr", "1", "--iters", "5", "--ig-steps", "8"},
      {"game", "--out", str(dir), "--manifest", str(dir / "attribute.json"), "--fraction-step", "0.25"},
      {"analyze", "--out", str(dir), "--manifest", str(dir / "attribute.json"), "--keep", "0.1,0.5"},
      {"correct", "--out", str(dir), "--model", model, "--data", data, "--method", "random,energy", "--steps", "2"},
  };
  for (const auto& s : steps) {
    const Result r = ffc_run(s);
    if (r.code != 0) failures.push_back(s[0] + ": " + r.err);
  }
  return failures;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(ffc_run({}).code == 2);
  CHECK(ffc_run({"frobnicate"}).code == 2);
  CHECK(ffc_run({"train", "--epochs", "many"}).code == 2);
  CHECK(ffc_run({"--help"}).code == 0);
  CHECK(ffc_run({"game", "--help"}).code == 0);
}

TEST_CASE("a missing dataset fails before any output is written") {
  TempDir tmp;
  const fs::path out = tmp.path / "never";
  const Result r = ffc_run({"train", "--out", str(out), "--data", str(tmp.path / "absent.idx")});
  CHECK(r.code == 2);
  CHECK(r.err.find("absent.idx") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("bad inputs map to their exit codes") {
  TempDir tmp;
  make_fixture(tmp.path);
  const std::string data = str(tmp.path / "planted-eval.idx");
  CHECK(ffc_run({"attribute", "--out", str(tmp.path), "--model", str(tmp.path / "model.ckpt"), "--data", data,
                 "--method", "telepathy"})
            .code == 2);
  CHECK(ffc_run({"attribute", "--out", str(tmp.path), "--model", str(tmp.path / "model.ckpt"), "--data", data,
                 "--method", "fft_of:ffc"})
            .code == 2);
  ffc::write_file_bytes(tmp.path / "junk.ckpt", {'n', 'o', 'p', 'e'});
  CHECK(ffc_run({"attribute", "--out", str(tmp.path), "--model", str(tmp.path / "junk.ckpt"), "--data", data}).code ==
        3);
  CHECK(ffc_run({"correct", "--out", str(tmp.path), "--model", str(tmp.path / "model.ckpt"), "--data", data,
                 "--method", "intgrad"})
            .code == 2);
}

TEST_CASE("config files sit between flags and defaults") {
  TempDir tmp;
  make_fixture(tmp.path);
  {
    std::ofstream cfg(tmp.path / "train.cfg");
    cfg << "# training overrides\nepochs = 2\nstep_size=0.01\n";
  }
  const std::string data = str(tmp.path / "planted-train.idx");
  REQUIRE(ffc_run({"train", "--out", str(tmp.path), "--data", data, "--hidden", "4", "--config",
                   str(tmp.path / "train.cfg"), "--epochs", "1", "--name", "m"})
              .code == 0);
  const Json r = read_json(tmp.path / "m-train.json");
  CHECK(r["config"]["epochs"] == 1);
  CHECK(r["config"]["step_size"] == 0.01);
  CHECK(r["config"]["batch_size"] == 16);
  CHECK(r["payload"]["loss_history"].size() == 1);

  {
    std::ofstream cfg(tmp.path / "bad.cfg");
    cfg << "no_such_key = 1\n";
  }
  CHECK(ffc_run({"train", "--out", str(tmp.path), "--data", data, "--config", str(tmp.path / "bad.cfg")}).code == 2);
}

TEST_CASE("the output directory falls back to the environment") {
  TempDir tmp;
  const fs::path env_dir = tmp.path / "from-env";
  ::setenv("FFC_OUTPUT_DIR", env_dir.c_str(), 1);
  const Result r = ffc_run({"dataset-gen", "--size", "4", "--classes", "2", "--frequencies", "1",
                            "--train-per-class", "2", "--eval-per-class", "0"});
  ::unsetenv("FFC_OUTPUT_DIR");
  CHECK(r.code == 0);
  CHECK(fs::exists(env_dir / "planted-train.idx"));
  CHECK(fs::exists(env_dir / "planted.json"));
  CHECK_FALSE(fs::exists(env_dir / "planted-eval.idx"));
}

TEST_CASE("two identical runs produce identical payloads and bytes") {
  TempDir a, b;
  make_fixture(a.path);
  make_fixture(b.path);
  CHECK(ffc::read_file_bytes(a.path / "model.ckpt") == ffc::read_file_bytes(b.path / "model.ckpt"));
  const auto fa = pipeline(a.path);
  const auto fb = pipeline(b.path);
  CHECK(fa.empty());
  CHECK(fb.empty());
  for (const char* report : {"planted.json", "model-train.json", "attribute.json", "game.json", "analyze.json",
                             "correct.json"}) {
    const Json ja = read_json(a.path / report), jb = read_json(b.path / report);
    CHECK_MESSAGE(ja["payload"] == jb["payload"], report);
    CHECK(ja.contains("timing"));
  }
  for (const char* map : {"maps/attribute/ffc/0.imp", "maps/attribute/random/3.imp",
                          "maps/attribute/fft_of_intgrad/1.imp"}) {
    CHECK_MESSAGE(ffc::read_file_bytes(a.path / map) == ffc::read_file_bytes(b.path / map), map);
  }
  const Json game = read_json(a.path / "game.json");
  REQUIRE(game["payload"]["reports"].size() == 3);
  CHECK(game["config"]["fractions"].size() == 4);
  const std::string csv_head = [&] {
    std::ifstream in(a.path / "game.csv");
    std::string line;
    std::getline(in, line);
    return line;
  }();
  CHECK(csv_head.rfind("# config: ", 0) == 0);
}

TEST_CASE("a constant model plays a zero-area game and has nothing to correct") {
  TempDir tmp;
  ffc::PlantedConfig pc;
  pc.height = pc.width = 6;
  pc.classes = 2;
  pc.frequencies = 1;
  pc.per_class = 3;
  ffc::LabeledDataset d = ffc::generate_planted_dataset(pc);
  for (auto& l : d.labels) l = 1;
  const fs::path images = tmp.path / "d.idx";
  ffc::save_idx_images(images, d.all());
  ffc::save_idx_labels(ffc::idx_labels_path(images), d.labels);
  ffc::save_checkpoint(tmp.path / "flat.ckpt", oracle::constant_model({1, 6, 6}, {-1.0, 2.0}));

  REQUIRE(ffc_run({"attribute", "--out", str(tmp.path), "--model", str(tmp.path / "flat.ckpt"), "--data",
                   str(images), "--method", "ffc,energy,intgrad"})
              .code == 0);
  REQUIRE(ffc_run({"game", "--out", str(tmp.path), "--manifest", str(tmp.path / "attribute.json")}).code == 0);
  for (const auto& r : read_json(tmp.path / "game.json")["payload"]["reports"]) {
    CHECK(std::abs(r["auc"].get<double>()) < 1e-9);
  }
  const Result c = ffc_run({"correct", "--out", str(tmp.path), "--model", str(tmp.path / "flat.ckpt"), "--data",
                            str(images)});
  CHECK(c.code == 0);
  CHECK(c.out.find("nothing to correct") != std::string::npos);
  CHECK(read_json(tmp.path / "correct.json")["payload"]["empty_misclassified_set"] == true);
}
