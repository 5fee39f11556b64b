#include "common.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "semidiff/image_io.hpp"

namespace {

struct Result {
  int code = -1;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
Result run_cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli_output.txt";
  const std::string cmd = std::string("\"") + SEMIDIFF_CLI + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const char* kMicro =
    " --set generator.base_width=8 --set generator.channel_mult=[1,2]"
    " --set generator.latent_dim=8 --set generator.embed_dim=16"
    " --set discriminator.base_width=8 --set discriminator.channel_mult=[1,2]"
    " --set discriminator.embed_dim=16 --set features.perceptual_width_scale=16"
    " --set features.contrastive_width_scale=16 --set crop=32 --set batch_phase1=2"
    " --set batch_labeled=2 --set batch_unlabeled=2 --set phase1_epochs=1"
    " --set phase2_epochs=1 --quiet";

}  // namespace

TEST_CASE("cli usage errors") {
  auto dir = testutil::scratch_dir("cli_usage");
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("--bogus", dir).code == 2);
  CHECK(run_cli("train --phase 1 --nope", dir).code == 2);
  CHECK(run_cli("--help", dir).code == 0);
  CHECK(run_cli("selftest", dir).code == 0);
}

TEST_CASE("cli end to end on a micro run") {
  auto dir = testutil::scratch_dir("cli_run");
  REQUIRE(run_cli("synth-data --out " + q(dir / "data") + " --n 4 --test-n 1 --size 32", dir).code == 0);
  REQUIRE(run_cli("init-config --preset tiny --out " + q(dir / "micro.json") + " --datasets " +
                      q(dir / "data" / "datasets.json"),
                  dir)
              .code == 0);
  const std::string train = " --config " + q(dir / "micro.json") + " --run " + q(dir / "run");

  auto early = run_cli("train --phase 2" + train + kMicro, dir);
  CHECK(early.code == 2);
  CHECK(early.output.find("phase-1 checkpoint") != std::string::npos);

  CHECK(run_cli("train --phase 1" + train + " --set batch_phase1=0", dir).code == 2);
  CHECK(run_cli("train --phase 1" + train + " --set no_such_key=1", dir).code == 2);

  auto p1 = run_cli("train --phase 1" + train + kMicro, dir);
  REQUIRE_MESSAGE(p1.code == 0, p1.output);
  auto p2 = run_cli("train --phase 2" + train + kMicro, dir);
  REQUIRE_MESSAGE(p2.code == 0, p2.output);

  // Same run directory, different config: the checkpoint is refused.
  auto clash = run_cli("train --phase 2" + train + kMicro + std::string(" --set seed=9") +
                           " --resume " + q(dir / "run" / "checkpoints" / "epoch_0001.ckpt"),
                       dir);
  CHECK(clash.code == 2);

  auto inspect = run_cli("warehouse-inspect --run " + q(dir / "run"), dir);
  CHECK(inspect.code == 0);
  CHECK(inspect.output.find("entries") != std::string::npos);

  torch::manual_seed(1);
  semidiff::image_io::write_png(dir / "in" / "photo.png", torch::rand({3, 64, 64}) * 2 - 1);
  auto infer = run_cli("infer --input " + q(dir / "in" / "photo.png") + " --checkpoint " +
                           q(dir / "run" / "checkpoints" / "epoch_0002.ckpt") + " --output " +
                           q(dir / "out") + " --stats",
                       dir);
  REQUIRE_MESSAGE(infer.code == 0, infer.output);
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
  auto out = semidiff::image_io::read_image(dir / "out" / "photo.png");
  CHECK(out.sizes() == torch::IntArrayRef({3, 64, 64}));
  CHECK(infer.output.find("generator calls 4") != std::string::npos);

  CHECK(run_cli("infer --input " + q(dir / "in") + " --checkpoint " + q(dir / "missing.ckpt") +
                    " --output " + q(dir / "out"),
                dir)
            .code == 2);
}
