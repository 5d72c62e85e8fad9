#include <doctest.h>

#include "oracles.hpp"
#include "rsvd/cli.hpp"
#include "rsvd/eval.hpp"
#include "rsvd/matrix_io.hpp"
#include "rsvd/select.hpp"
#include "rsvd/video.hpp"

#include <nlohmann/json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("rsvd_cli_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = rsvd::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(rsvd::io::read_file(p)); }

// Rank-two signal with a block of gross outliers.
rsvd::DataMatrix contaminated_matrix(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const rsvd::Index n = 30, p = 20;
  rsvd::DataMatrix X(n, p);
  rsvd::DataMatrix a = oracle::gaussian(n, 1, rng), b = oracle::gaussian(p, 1, rng);
  X = 3.0 * a * b.transpose();
  for (rsvd::Index j = 0; j < p; ++j)
    for (rsvd::Index i = 0; i < n; ++i) X(i, j) += 0.2 * nd(rng);
  for (rsvd::Index i = 0; i < 6; ++i)
    for (rsvd::Index j = 0; j < 4; ++j) X(i, j) += 1.0;
  return X;
}

void write_static_frames(const fs::path& dir, int frames) {
  fs::create_directories(dir);
  const rsvd::Index h = 6, w = 5;
  Eigen::VectorXd img(h * w);
  for (rsvd::Index i = 0; i < h * w; ++i) img(i) = static_cast<double>((17 * i + 40) % 256) / 255.0;
  for (int t = 0; t < frames; ++t) rsvd::video::write_pgm(dir / rsvd::video::frame_name("frame_", t), h, w, img);
}

double background_rms(const fs::path& estimated, const fs::path& truth, const std::vector<bool>& skip) {
  const auto est = rsvd::video::read_frame_directory(estimated);
  const auto ref = rsvd::video::read_frame_directory(truth);
  double sq = 0.0;
  double count = 0.0;
  for (rsvd::Index t = 0; t < ref.size(); ++t) {
    if (skip[static_cast<std::size_t>(t)]) continue;
    sq += (est.frames[t] - ref.frames[t]).squaredNorm();
    count += static_cast<double>(ref.frames[t].size());
  }
  return std::sqrt(sq / count);
}

int system_exit(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("exit_codes") {
  TEST_CASE("help exits 0") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("decompose") != std::string::npos);
  }

  TEST_CASE("unknown flag is misuse") {
    const auto r = run({"decompose", "--no-such-flag"});
    CHECK(r.code == 4);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("missing file exits 2 with a diagnostic") {
    TempDir tmp("missing");
    const auto r = run({"decompose", "-i", (tmp / "absent.csv").string()});
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
    CHECK(r.out.empty());
  }

  TEST_CASE("malformed CSV exits 2") {
    TempDir tmp("badcsv");
    rsvd::io::write_file_atomic(tmp / "bad.csv", "1,2\n3\n");
    CHECK(run({"decompose", "-i", (tmp / "bad.csv").string()}).code == 2);
  }

  TEST_CASE("alpha outside [0,1] is misuse") {
    TempDir tmp("alpha");
    rsvd::io::write_csv(tmp / "m.csv", rsvd::DataMatrix::Identity(3, 3));
    CHECK(run({"decompose", "-i", (tmp / "m.csv").string(), "--alpha", "1.5"}).code == 4);
    CHECK(run({"decompose", "-i", (tmp / "m.csv").string(), "--rank", "7"}).code == 4);
    CHECK(run({"decompose", "-i", (tmp / "m.csv").string(), "--rank", "x"}).code == 4);
  }

  TEST_CASE("non-convergence exits 3 and still writes the model") {
    TempDir tmp("noconv");
    std::mt19937_64 rng(3);
    rsvd::io::write_csv(tmp / "m.csv", oracle::gaussian(12, 9, rng));
    const auto r = run({"decompose", "-i", (tmp / "m.csv").string(), "-o", (tmp / "model.json").string(),
                        "--rank", "2", "--max-iter", "1"});
    CHECK(r.code == 3);
    REQUIRE(fs::exists(tmp / "model.json"));
    const auto doc = read_json(tmp / "model.json");
    CHECK(doc["converged"][0] == false);
  }

  TEST_CASE("executable forwards exit codes") {
    TempDir tmp("exe");
    const std::string exe = RSVD_CLI_PATH;
    CHECK(system_exit(exe + " --help > /dev/null") == 0);
    CHECK(system_exit(exe + " decompose -i " + (tmp / "absent.csv").string() + " 2> /dev/null") == 2);
    CHECK(system_exit(exe + " bogus 2> /dev/null") == 4);
  }
}

TEST_SUITE("decompose") {
  TEST_CASE("identity CSV gives three unit singular values") {
    TempDir tmp("identity");
    rsvd::io::write_file_atomic(tmp / "id.csv", "1,0,0\n0,1,0\n0,0,1\n");
    const auto r = run({"decompose", "-i", (tmp / "id.csv").string(), "--rank", "3", "--alpha", "0"});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    REQUIRE(doc["lambda"].size() == 3);
    for (const auto& l : doc["lambda"]) CHECK(l.get<double>() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(doc["rank"] == 3);
  }

  TEST_CASE("binary input matches CSV input") {
    TempDir tmp("binary");
    std::mt19937_64 rng(8);
    const rsvd::DataMatrix X = oracle::gaussian(10, 7, rng);
    rsvd::io::write_csv(tmp / "m.csv", X);
    rsvd::io::write_binary(tmp / "m.rsvd", X);
    const auto a = run({"decompose", "-i", (tmp / "m.rsvd").string(), "--rank", "2"});
    REQUIRE(a.code == 0);
    const auto da = json::parse(a.out);
    const auto db = json::parse(run({"decompose", "-i", (tmp / "m.csv").string(), "--rank", "2"}).out);
    for (int k = 0; k < 2; ++k)
      CHECK(da["lambda"][k].get<double>() == doctest::Approx(db["lambda"][k].get<double>()).epsilon(1e-12));
  }

  TEST_CASE("auto alpha records the library selection") {
    TempDir tmp("autoalpha");
    const rsvd::DataMatrix X = contaminated_matrix(21);
    rsvd::io::write_csv(tmp / "m.csv", X);
    const auto r = run({"decompose", "-i", (tmp / "m.csv").string(), "--alpha", "auto", "--rank", "1"});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);

    // The CSV round trip is exact, so the library sees the same matrix.
    const rsvd::DataMatrix Y = rsvd::io::read_csv(tmp / "m.csv");
    const auto sel = rsvd::select_alpha(Y, 1, rsvd::default_alpha_grid(), rsvd::RSvdConfig{});
    CHECK(doc["chosen_alpha"].get<double>() == sel.chosen);
    CHECK(doc["alpha"].get<double>() == sel.chosen);
    REQUIRE(doc["selection"]["scores"].size() == sel.scores.size());
    for (std::size_t i = 0; i < sel.scores.size(); ++i)
      if (!sel.flagged[i]) CHECK(doc["selection"]["scores"][i].get<double>() == sel.scores[i]);
  }

  TEST_CASE("auto rank records the classical spectrum") {
    TempDir tmp("autorank");
    rsvd::DataMatrix X = rsvd::DataMatrix::Zero(6, 5);
    X.diagonal() << 10.0, 1.0, 0.1, 0.01, 0.001;
    rsvd::io::write_csv(tmp / "m.csv", X);
    const auto r = run({"decompose", "-i", (tmp / "m.csv").string(), "--rank", "auto", "--epsilon", "0.05",
                        "--alpha", "0"});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    CHECK(doc["chosen_rank"] == 1);
    CHECK(doc["rank"] == 1);
  }
}

TEST_SUITE("background") {
  TEST_CASE("static frames reproduce byte-identical backgrounds") {
    TempDir tmp("static");
    write_static_frames(tmp / "in", 8);
    const auto r = run({"background", "-i", (tmp / "in").string(), "-o", (tmp / "out").string(), "--rank", "1"});
    REQUIRE(r.code == 0);
    for (const auto& f : rsvd::video::list_frames(tmp / "in")) {
      const fs::path b = tmp / "out" / "background" / f.filename();
      REQUIRE(fs::exists(b));
      CHECK(rsvd::io::read_file(b) == rsvd::io::read_file(f));
    }
    CHECK(fs::exists(tmp / "out" / "model_0000.json"));
    CHECK(fs::exists(tmp / "out" / "summary.json"));
  }

  TEST_CASE("batch of four on eight frames gives two models in order") {
    TempDir tmp("batch");
    write_static_frames(tmp / "in", 8);
    const auto r = run({"background", "-i", (tmp / "in").string(), "-o", (tmp / "out").string(), "--rank", "1",
                        "--batch", "4"});
    REQUIRE(r.code == 0);
    const auto m0 = read_json(tmp / "out" / "model_0000.json");
    const auto m1 = read_json(tmp / "out" / "model_0001.json");
    CHECK_FALSE(fs::exists(tmp / "out" / "model_0002.json"));
    CHECK(m0["first_frame"] == 0);
    CHECK(m0["frame_count"] == 4);
    CHECK(m1["first_frame"] == 4);
    CHECK(m1["frame_count"] == 4);
    CHECK(json::parse(r.out)["batches"] == 2);
    CHECK(rsvd::video::list_frames(tmp / "out" / "mask").size() == 8);
  }

  TEST_CASE("inconsistent frame sizes exit 2") {
    TempDir tmp("sizes");
    write_static_frames(tmp / "in", 3);
    rsvd::video::write_pgm(tmp / "in" / "frame_0009.pgm", 2, 2, Eigen::VectorXd::Zero(4));
    CHECK(run({"background", "-i", (tmp / "in").string(), "-o", (tmp / "out").string()}).code == 2);
  }

  TEST_CASE("robust fit beats classical on tampered frames") {
    TempDir tmp("tamper");
    REQUIRE(run({"synth", "-o", (tmp / "syn").string(), "--height", "24", "--width", "24", "--frames", "20",
                 "--contamination", "salt_pepper", "--contamination-frames", "8:10", "--seed", "4"})
                .code == 0);
    REQUIRE(run({"background", "-i", (tmp / "syn" / "frames").string(), "-o", (tmp / "robust").string(),
                 "--alpha", "0.75", "--rank", "1", "--max-iter", "2000"})
                .code == 0);
    REQUIRE(run({"background", "-i", (tmp / "syn" / "frames").string(), "-o", (tmp / "classical").string(),
                 "--alpha", "0", "--rank", "1"})
                .code == 0);
    const std::vector<bool> none(20, false);
    const double robust = background_rms(tmp / "robust" / "background", tmp / "syn" / "background", none);
    const double classical = background_rms(tmp / "classical" / "background", tmp / "syn" / "background", none);
    CHECK(robust < classical);
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("identical directories score F1 = 1") {
    TempDir tmp("same");
    REQUIRE(run({"synth", "-o", (tmp / "syn").string(), "--height", "16", "--width", "16", "--frames", "6",
                 "--object-size", "3"})
                .code == 0);
    const auto r = run({"evaluate", "--pred", (tmp / "syn" / "truth").string(), "--truth",
                        (tmp / "syn" / "truth").string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["aggregate"]["f1"].get<double>() == 1.0);
  }

  TEST_CASE("disjoint masks score F1 = 0") {
    TempDir tmp("disjoint");
    const rsvd::Index h = 4, w = 4;
    Eigen::VectorXd left = Eigen::VectorXd::Zero(h * w), right = Eigen::VectorXd::Zero(h * w);
    for (rsvd::Index i = 0; i < h * w; ++i) (i % w < 2 ? left : right)(i) = 1.0;
    fs::create_directories(tmp / "p");
    fs::create_directories(tmp / "t");
    for (int t = 0; t < 3; ++t) {
      rsvd::video::write_pgm(tmp / "p" / rsvd::video::frame_name("m_", t), h, w, left);
      rsvd::video::write_pgm(tmp / "t" / rsvd::video::frame_name("m_", t), h, w, right);
    }
    const auto r = run({"evaluate", "--pred", (tmp / "p").string(), "--truth", (tmp / "t").string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["aggregate"]["f1"].get<double>() == 0.0);
  }

  TEST_CASE("mismatched frame lists exit 2") {
    TempDir tmp("mismatch");
    write_static_frames(tmp / "p", 3);
    write_static_frames(tmp / "t", 4);
    CHECK(run({"evaluate", "--pred", (tmp / "p").string(), "--truth", (tmp / "t").string()}).code == 2);
  }

  TEST_CASE("pooled F1 matches the library on a synthetic run") {
    TempDir tmp("pooled");
    REQUIRE(run({"synth", "-o", (tmp / "syn").string(), "--height", "20", "--width", "20", "--frames", "12",
                 "--object-size", "4", "--noise-sd", "0.01", "--seed", "9"})
                .code == 0);
    REQUIRE(run({"background", "-i", (tmp / "syn" / "frames").string(), "-o", (tmp / "bg").string(), "--alpha",
                 "0.5", "--rank", "1", "--max-iter", "2000"})
                .code == 0);
    const auto r = run({"evaluate", "--pred", (tmp / "bg" / "mask").string(), "--truth",
                        (tmp / "syn" / "truth").string(), "--csv", (tmp / "frames.csv").string()});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);

    const auto pred = rsvd::video::mask_from_frames(rsvd::video::read_frame_directory(tmp / "bg" / "mask"));
    const auto truth = rsvd::video::mask_from_frames(rsvd::video::read_frame_directory(tmp / "syn" / "truth"));
    const auto m = rsvd::eval::evaluate_mask(pred, truth);
    CHECK(doc["aggregate"]["f1"].get<double>() == m.aggregate.f1);
    CHECK(doc["aggregate"]["precision"].get<double>() == m.aggregate.precision);
    CHECK(doc["aggregate"]["recall"].get<double>() == m.aggregate.recall);
    CHECK(doc["per_frame"].size() == 12);

    std::istringstream csv(rsvd::io::read_file(tmp / "frames.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 13);
  }

  TEST_CASE("sweep reports the best k_sigma") {
    TempDir tmp("sweep");
    REQUIRE(run({"synth", "-o", (tmp / "syn").string(), "--height", "16", "--width", "16", "--frames", "10",
                 "--object-size", "3", "--illumination", "0"})
                .code == 0);
    const auto r = run({"evaluate", "--frames", (tmp / "syn" / "frames").string(), "--truth",
                        (tmp / "syn" / "truth").string(), "--sweep", "1:4:1", "--alpha", "0.5", "--rank", "1",
                        "--max-iter", "2000"});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    REQUIRE(doc["sweep"].size() == 4);
    double best = -1.0;
    for (const auto& row : doc["sweep"]) best = std::max(best, row["f1"].get<double>());
    CHECK(doc["best_f1"].get<double>() == best);
  }
}

TEST_SUITE("determinism") {
  std::string snapshot(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += f.string() + "\n" + rsvd::io::read_file(dir / f);
    return all;
  }

  TEST_CASE("matrix commands reproduce their JSON byte for byte") {
    TempDir tmp("determinism");
    rsvd::io::write_csv(tmp / "m.csv", contaminated_matrix(5));
    const std::string m = (tmp / "m.csv").string();
    const std::vector<std::vector<std::string>> commands = {
        {"decompose", "-i", m, "--rank", "2", "--alpha", "0.5"},
        {"decompose", "-i", m, "--rank", "auto", "--alpha", "auto"},
        {"select-alpha", "-i", m, "--rank", "1"},
        {"consistency", "--sizes", "10,12", "--replications", "30", "--seed", "3"},
    };
    for (const auto& args : commands) {
      const auto a = run(args), b = run(args);
      CHECK(a.code == b.code);
      CHECK_FALSE(a.out.empty());
      CHECK(a.out == b.out);
    }
  }

  TEST_CASE("video commands reproduce every output file") {
    TempDir tmp("determinism_video");
    for (const char* dir : {"a", "b"}) {
      const fs::path root = tmp / dir;
      REQUIRE(run({"synth", "-o", (root / "syn").string(), "--height", "12", "--width", "12", "--frames", "9",
                   "--object-size", "3", "--noise-sd", "0.01", "--contamination", "salt_pepper",
                   "--contamination-frames", "3:4"})
                  .code == 0);
      const int bg = run({"background", "-i", (root / "syn" / "frames").string(), "-o", (root / "bg").string(),
                          "--rank", "auto", "--alpha", "auto", "--batch", "4"})
                         .code;
      CHECK((bg == 0 || bg == 3));
      REQUIRE(run({"evaluate", "--pred", (root / "bg" / "mask").string(), "--truth",
                   (root / "syn" / "truth").string(), "-o", (root / "eval.json").string()})
                  .code == 0);
    }
    CHECK(snapshot(tmp / "a") == snapshot(tmp / "b"));
  }

  TEST_CASE("bench reproduces everything except timings") {
    const std::vector<std::string> args{"bench", "--sizes", "40x10,80x10", "--runs", "5", "--iterations", "3"};
    auto a = json::parse(run(args).out), b = json::parse(run(args).out);
    for (auto* doc : {&a, &b})
      for (auto& row : (*doc)["table"])
        for (const char* key : {"seconds_per_frame_mean", "seconds_per_frame_sd", "seconds_per_iteration_mean",
                                "seconds_per_iteration_sd"}) {
          CHECK(row[key].get<double>() >= 0.0);
          row.erase(key);
        }
    CHECK(a.dump() == b.dump());
    CHECK(a["table"].size() == 2);
  }
}
