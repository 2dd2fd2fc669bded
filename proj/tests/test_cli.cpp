#include "support.hpp"

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

using namespace diffo;

namespace {

struct Run {
  int status = -1;
  std::string output;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " DIFFO_CLI " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kTiny = "--iterations 2 --batch-size 2 --crop 32 --channel-width 16 --latent-dim 4 --unet-width 16";

/// Corpus plus two trained checkpoints, shared by the test cases.
struct Fixture {
  test::TempDir dir;
  std::string data, k16, k32;

  Fixture() {
    data = dir / "data";
    k16 = dir / "k16.ckpt";
    k32 = dir / "k32.ckpt";
    REQUIRE(run("synth --out " + data + " --count 3 --size 48 --seed 1").status == 0);
    REQUIRE(run("train --data " + data + " --out " + k16 + " --codebook-size 16 " + kTiny).status == 0);
    REQUIRE(run("train --data " + data + " --out " + k32 + " --codebook-size 32 --seed 2 " + kTiny).status == 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("usage errors exit nonzero with a message") {
  Run r = run("");
  CHECK(r.status != 0);
  r = run("compress --bogus");
  CHECK(r.status != 0);
  CHECK(r.output.find("diffo: error") != std::string::npos);
  r = run("frobnicate");
  CHECK(r.status != 0);
  CHECK(run("--help").status == 0);
}

TEST_CASE("missing files are reported") {
  Fixture& f = fixture();
  Run r = run("compress /nonexistent.png --model " + f.k16 + " --out " + (f.dir / "x.dfo"));
  CHECK(r.status != 0);
  CHECK(r.output.find("diffo: error") != std::string::npos);
  r = run("decompress /nonexistent.dfo --model " + f.k16 + " --out " + (f.dir / "x.png"));
  CHECK(r.status != 0);
  r = run("train --data " + (f.dir / "nothing") + " --out " + (f.dir / "m.ckpt"));
  CHECK(r.status != 0);
}

TEST_CASE("round trip through the command line is deterministic") {
  Fixture& f = fixture();
  const std::string img = f.data + "/img_0000.png";
  const Run c = run("compress " + img + " --model " + f.k16 + " --out " + (f.dir / "a.dfo"));
  REQUIRE(c.status == 0);
  CHECK(c.output.find("estimated_bpp") != std::string::npos);
  REQUIRE(run("compress " + img + " --model " + f.k16 + " --out " + (f.dir / "b.dfo")).status == 0);
  CHECK(read_bytes(f.dir / "a.dfo") == read_bytes(f.dir / "b.dfo"));
  for (const char* steps : {"0", "1", "15"}) {
    const std::string args = "decompress " + (f.dir / "a.dfo") + " --model " + f.k16 + " --seed 3 --steps " + steps;
    REQUIRE(run(args + " --out " + (f.dir / "x1.png")).status == 0);
    REQUIRE(run(args + " --out " + (f.dir / "x2.png")).status == 0);
    CHECK(read_bytes(f.dir / "x1.png") == read_bytes(f.dir / "x2.png"));
  }
}

TEST_CASE("decoding with the wrong model fails on the hash") {
  Fixture& f = fixture();
  REQUIRE(run("compress " + f.data + "/img_0001.png --model " + f.k16 + " --out " + (f.dir / "h.dfo")).status == 0);
  const Run r = run("decompress " + (f.dir / "h.dfo") + " --model " + f.k32 + " --out " + (f.dir / "h.png"));
  CHECK(r.status != 0);
  CHECK(r.output.find("hash") != std::string::npos);
}

TEST_CASE("fast coder selection") {
  Fixture& f = fixture();
  const std::string img = f.data + "/img_0002.png";
  REQUIRE(run("compress " + img + " --model " + f.k16 + " --out " + (f.dir / "ref.dfo") + " --coder reference")
              .status == 0);
  const std::string env = "DIFFO_FAST_CODER_LIB=" DIFFO_STUB_LIB;
  const Run r = run("compress " + img + " --model " + f.k16 + " --out " + (f.dir / "fast.dfo") + " --coder fast", env);
  REQUIRE(r.status == 0);
  CHECK(read_bytes(f.dir / "ref.dfo") == read_bytes(f.dir / "fast.dfo"));
  CHECK(run("decompress " + (f.dir / "fast.dfo") + " --model " + f.k16 + " --out " + (f.dir / "fast.png") +
                " --coder fast",
            env)
            .status == 0);
  const Run missing = run("compress " + img + " --model " + f.k16 + " --out " + (f.dir / "y.dfo") + " --coder fast",
                          "DIFFO_FAST_CODER_LIB=/nonexistent.so DIFFO_FAST_CODER_BIN=");
  CHECK(missing.status != 0);
}

TEST_CASE("calibrate and bench write their tables") {
  Fixture& f = fixture();
  const std::string out = f.dir / "eval";
  const Run c = run("calibrate --model " + f.k16 + " --model " + f.k32 + " --data " + f.data + " --out " + out +
                    " --grid 0.3,0.9");
  REQUIRE(c.status == 0);
  CHECK(read_lines(out + "/calibration.csv").size() == 5);
  CHECK(std::filesystem::exists(out + "/rate_model.kv"));
  const Run b = run("bench --model " + f.k16 + " --model " + f.k32 + " --data " + f.data + " --out " + out +
                    " --steps 1,15 --runs 1 --rate-model " + out + "/rate_model.kv");
  REQUIRE(b.status == 0);
  const auto timing = read_lines(out + "/timing.csv");
  REQUIRE(timing.size() == 5);
  CHECK(timing[0] == "rate_point,steps,encode_s,decode_s");
  int ones = 0, fifteens = 0;
  for (size_t i = 1; i < timing.size(); ++i) {
    const std::string steps = timing[i].substr(timing[i].find(',') + 1, timing[i].find(',', timing[i].find(',') + 1) -
                                                                            timing[i].find(',') - 1);
    ones += steps == "1";
    fifteens += steps == "15";
  }
  CHECK(ones == 2);
  CHECK(fifteens == 2);
  CHECK(read_lines(out + "/rd.csv").size() == 3);
  CHECK(std::filesystem::exists(out + "/rd_psnr.svg"));
}
