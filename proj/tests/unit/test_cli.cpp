#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args, const has8::test::ScratchDir& dir) {
  const std::string out_file = dir.file("stdout.txt");
  const std::string cmd = std::string(HAS8_CLI_PATH) + " " + args + " > " + out_file + " 2> " + dir.file("stderr.txt");
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  o.out = ss.str();
  return o;
}

}  // namespace

TEST_CASE("gradcheck exits 0 and writes a report; a mutation exits 1") {
  has8::test::ScratchDir dir("cli1");
  const auto ok = run("gradcheck --report " + dir.file("r.json"), dir);
  CHECK(ok.code == 0);
  CHECK(has8::test::read_bytes(dir.file("r.json")).size() > 10);
  CHECK(run("gradcheck --mutate rescale-exponent", dir).code == 1);
  CHECK(run("gradcheck --mutate alpha", dir).code == 1);
}

TEST_CASE("bad input exits 2") {
  has8::test::ScratchDir dir("cli2");
  CHECK(run("encode-inspect -i 256", dir).code == 2);
  CHECK(run("macs --set model.colour=red", dir).code == 2);
  CHECK(run("train --set train.epochs=-1", dir).code == 2);
  CHECK(run("eval " + dir.file("missing.has8"), dir).code == 2);
  CHECK(run("frobnicate", dir).code == 2);
  CHECK(run("", dir).code == 2);
}

TEST_CASE("macs and encode-inspect print tables") {
  has8::test::ScratchDir dir("cli3");
  const auto macs = run("macs --set model.variant=vgg --set model.b=16 --size 32", dir);
  CHECK(macs.code == 0);
  CHECK(macs.out.find("total") != std::string::npos);
  const auto enc = run("encode-inspect -i 5", dir);
  CHECK(enc.code == 0);
  CHECK(enc.out.find("00000101") != std::string::npos);
}

TEST_CASE("train then eval on a toy dataset") {
  has8::test::ScratchDir dir("cli4");
  has8::test::write_toy_mnist(dir.path() / "data", 64, 32, 8, 7);
  const std::string common = " --set model.b=2 --set model.d_max=1 --set model.in_channels=1 --set model.input_size=8"
                             " --set data.dir=" + (dir.path() / "data").string() + " --set run.out_dir=" +
                             (dir.path() / "run").string();
  const auto t = run("train -q --set train.epochs=1 --set train.batch_size=16" + common, dir);
  CHECK(t.code == 0);
  CHECK(t.out.find("best val accuracy") != std::string::npos);
  const auto e = run("eval " + (dir.path() / "run" / "epoch-1.has8").string() + " --split test", dir);
  CHECK(e.code == 0);
  CHECK(e.out.find("top-1") != std::string::npos);
}
