#include "common.hpp"

#include <fstream>
#include <iterator>

#include "semidiff/checkpoint.hpp"
#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/trainer.hpp"

using namespace semidiff;
using namespace semidiff::checkpoint;

namespace {

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

Checkpoint sample_checkpoint() {
  auto cfg = testutil::micro_config();
  auto nets = trainer::Nets::build(cfg);
  // One optimizer step so the Adam moments are populated.
  for (auto& p : nets.g->parameters()) p.mutable_grad() = torch::ones_like(p);
  nets.opt_g->step();

  Checkpoint c;
  c.config = config::to_json(cfg);
  c.config_hash = config::config_hash(cfg);
  c.phase = 2;
  c.epoch = 7;
  c.phase_epoch = 3;
  c.global_step = 99;
  c.rng_seed = 5;
  c.student_g = backbone::take_snapshot(*nets.g);
  c.student_d = backbone::take_snapshot(*nets.d);
  c.teacher_g = backbone::take_snapshot(*nets.teacher);
  c.opt_g = take_adam(*nets.opt_g, *nets.g);
  c.opt_d = take_adam(*nets.opt_d, *nets.d);
  warehouse::WarehouseEntry e;
  e.sample_id = "set/a.png";
  e.patch = image_io::quantize16(torch::rand({3, 8, 8}) * 2 - 1);
  e.score = 1.25;
  e.update_count = 2;
  c.warehouse.push_back(e);
  c.warehouse_scorer = "proxy-sharpness-v1";
  return c;
}

}  // namespace

TEST_CASE("save, load, save is byte-identical") {
  auto dir = testutil::scratch_dir("ckpt");
  auto c = sample_checkpoint();
  save(c, dir / "a.ckpt");
  auto back = load(dir / "a.ckpt");
  save(back, dir / "b.ckpt");
  CHECK(bytes_of(dir / "a.ckpt") == bytes_of(dir / "b.ckpt"));

  CHECK(back.phase == 2);
  CHECK(back.global_step == 99);
  CHECK(back.config_hash == c.config_hash);
  CHECK(back.student_g == c.student_g);
  CHECK(back.opt_g == c.opt_g);
  CHECK_FALSE(back.opt_g.steps.empty());
  REQUIRE(back.warehouse.size() == 1);
  CHECK(torch::equal(back.warehouse[0].patch, c.warehouse[0].patch));
  CHECK(back.warehouse[0].score == 1.25);
}

TEST_CASE("corrupt files") {
  auto dir = testutil::scratch_dir("ckpt_bad");
  save(sample_checkpoint(), dir / "good.ckpt");
  const auto good = bytes_of(dir / "good.ckpt");

  auto magic = good;
  magic[0] = 'X';
  write_bytes(dir / "magic.ckpt", magic);
  CHECK_THROWS_AS(load(dir / "magic.ckpt"), CheckpointVersionError);

  auto version = good;
  version[4] = 9;
  write_bytes(dir / "version.ckpt", version);
  CHECK_THROWS_AS(load(dir / "version.ckpt"), CheckpointVersionError);

  auto header = good;
  header[16] = '#';
  write_bytes(dir / "header.ckpt", header);
  CHECK_THROWS_AS(load(dir / "header.ckpt"), CheckpointVersionError);

  write_bytes(dir / "short.ckpt", good.substr(0, good.size() - 10));
  CHECK_THROWS_AS(load(dir / "short.ckpt"), PersistenceError);
  write_bytes(dir / "long.ckpt", good + "extra");
  CHECK_THROWS_AS(load(dir / "long.ckpt"), PersistenceError);
  CHECK_THROWS_AS(load(dir / "absent.ckpt"), PersistenceError);
}

TEST_CASE("compatibility check names both hashes") {
  auto c = sample_checkpoint();
  CHECK_NOTHROW(check_compatible(c, c.config_hash));
  try {
    check_compatible(c, "0123456789abcdef");
    FAIL("expected a compatibility error");
  } catch (const CompatibilityError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(c.config_hash) != std::string::npos);
    CHECK(msg.find("0123456789abcdef") != std::string::npos);
  }
}

TEST_CASE("Adam state round trip") {
  auto cfg = testutil::micro_config();
  auto a = trainer::Nets::build(cfg);
  for (auto& p : a.d->parameters()) p.mutable_grad() = torch::full_like(p, 0.5);
  a.opt_d->step();
  a.opt_d->step();
  auto snap = take_adam(*a.opt_d, *a.d);
  CHECK(snap.steps.front() == 2);

  auto b = trainer::Nets::build(cfg);
  load_adam(*b.opt_d, *b.d, snap);
  CHECK(take_adam(*b.opt_d, *b.d) == snap);

  CHECK_THROWS_AS(load_adam(*b.opt_g, *b.g, snap), SnapshotCompatibilityError);
}

TEST_CASE("checkpoint paths") {
  CHECK(checkpoint_path("run", 12) == fs::path("run") / "checkpoints" / "epoch_0012.ckpt");
}
