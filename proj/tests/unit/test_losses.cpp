#include "common.hpp"

#include <cmath>

#include "semidiff/errors.hpp"
#include "semidiff/features.hpp"
#include "semidiff/losses.hpp"

using namespace semidiff;
using namespace semidiff::losses;

namespace {

double val(const torch::Tensor& t) { return t.item<double>(); }

// Pretends to be a perceptual backbone that always fails.
class BrokenExtractor : public FeatureExtractor {
 public:
  std::vector<torch::Tensor> features(const torch::Tensor&) override {
    throw FeatureBackendError("backend unavailable");
  }
  size_t tap_count() const override { return 1; }
  std::string name() const override { return "broken"; }
};

}  // namespace

TEST_CASE("loss_rec") {
  torch::manual_seed(1);
  auto a = torch::rand({2, 3, 8, 8});
  CHECK(val(loss_rec(a, a)) == 0.0);
  CHECK(val(loss_rec(a + 0.1, a)) == doctest::Approx(0.019).epsilon(1e-5));
  CHECK(val(loss_rec(a - 0.1, a)) == doctest::Approx(0.019).epsilon(1e-5));
  CHECK_THROWS_AS(loss_rec(a, a.narrow(3, 0, 4)), DimensionError);
}

TEST_CASE("loss_perc and loss_aux") {
  torch::manual_seed(2);
  auto a = torch::rand({2, 3, 8, 8}), b = torch::rand({2, 3, 8, 8});
  IdentityExtractor id;
  CHECK(val(loss_perc(a, a, id)) == 0.0);
  // Summed over batch items, so the identity case is N times the pooled mean.
  CHECK(val(loss_perc(a, b, id)) == doctest::Approx(2 * val((a - b).abs().mean())).epsilon(1e-5));

  LossWeights w;
  CHECK(val(loss_aux(a, a, id, w)) == 0.0);
  CHECK(val(combine_aux(torch::tensor(0.019), torch::tensor(0.0), w)) == doctest::Approx(0.095));
  CHECK(val(combine_aux(torch::tensor(0.0), torch::tensor(0.1), w)) == doctest::Approx(1.0));

  BrokenExtractor broken;
  CHECK_THROWS_AS(loss_perc(a, b, broken), FeatureBackendError);
}

TEST_CASE("adversarial losses") {
  CHECK(loss_adv_g_prob(1.0) == doctest::Approx(0.0));
  CHECK(loss_adv_g_prob(std::exp(-1.0)) == doctest::Approx(1.0));
  CHECK(loss_adv_g_prob(0.5) == doctest::Approx(std::log(2.0)));

  CHECK(loss_adv_d_prob(0.5, 0.5) == doctest::Approx(0.0));
  CHECK(loss_adv_d_prob(std::exp(-1.0), std::exp(-1.0)) == doctest::Approx(0.0));
  CHECK(loss_adv_d_prob(1.0, 0.0) == doctest::Approx(-10.0));
  CHECK(loss_adv_d_prob(1.0, 0.0, AdvDForm::literal, -3.0) == doctest::Approx(-3.0));
  CHECK(loss_adv_d_prob(0.5, 0.5, AdvDForm::conventional) == doctest::Approx(2 * std::log(2.0)));

  SUBCASE("extreme logits stay finite, gradients included") {
    auto fake = torch::tensor({-200.0, 0.0, 200.0}, torch::requires_grad());
    auto real = torch::tensor({200.0, 0.0, -200.0}, torch::requires_grad());
    auto g = loss_adv_g(fake);
    auto d = loss_adv_d(real, fake);
    CHECK(std::isfinite(val(g)));
    CHECK(std::isfinite(val(d)));
    (g + d).backward();
    CHECK(torch::isfinite(fake.grad()).all().item<bool>());
    CHECK(torch::isfinite(real.grad()).all().item<bool>());
    CHECK(val(loss_adv_g(torch::tensor({0.0}))) == doctest::Approx(std::log(2.0)));
  }
}

TEST_CASE("loss_contrastive") {
  IdentityExtractor id;
  LossWeights w;
  w.contrastive = {1.0};
  w.denominator_epsilon = 1e-12;
  auto s = torch::full({1, 3, 2, 2}, 0.5), r = torch::full({1, 3, 2, 2}, 1.0),
       x = torch::zeros({1, 3, 2, 2});
  CHECK(val(loss_contrastive(s, r, x, id, w)) == doctest::Approx(1.0));
  CHECK(val(loss_contrastive(r, r, x, id, w)) == 0.0);

  torch::manual_seed(3);
  auto a = torch::rand({2, 3, 8, 8}), b = torch::rand({2, 3, 8, 8}), c = torch::rand({2, 3, 8, 8});
  IdentityExtractor five(5);
  LossWeights base;
  LossWeights scaled = base;
  for (auto& v : scaled.contrastive) v *= 3.0;
  CHECK(val(loss_contrastive(a, b, c, five, scaled)) ==
        doctest::Approx(3.0 * val(loss_contrastive(a, b, c, five, base))).epsilon(1e-6));

  // Student equal to the negative: the epsilon keeps it finite.
  CHECK(std::isfinite(val(loss_contrastive(c, b, c, five, base))));
  CHECK_THROWS_AS(loss_contrastive(a, b, c.narrow(2, 0, 4), five, base), DimensionError);
  IdentityExtractor two(2);
  CHECK_THROWS_AS(loss_contrastive(a, b, c, two, base), ValidationError);
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.w_l1 = -1;
  CHECK_THROWS_AS(w.validate(), ValidationError);
  w = {};
  w.denominator_epsilon = 0;
  CHECK_THROWS_AS(w.validate(), ValidationError);
}

TEST_CASE("gradients of loss_rec and loss_contrastive match finite differences") {
  torch::manual_seed(4);
  auto target = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  auto negative = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  auto pred = torch::rand({1, 3, 8, 8}, torch::kFloat64).requires_grad_(true);
  IdentityExtractor id(5);
  LossWeights w;

  for (int which = 0; which < 2; ++which) {
    auto f = [&](const torch::Tensor& p) {
      return which == 0 ? loss_rec(p, target, w) : loss_contrastive(p, target, negative, id, w);
    };
    auto grad = torch::autograd::grad({f(pred)}, {pred})[0];
    const double h = 1e-6;
    auto flat = pred.detach().flatten();
    double worst = 0.0;
    for (int64_t k = 0; k < flat.numel(); k += 7) {
      auto plus = flat.clone(), minus = flat.clone();
      plus[k] += h;
      minus[k] -= h;
      const double fd = (val(f(plus.view_as(pred))) - val(f(minus.view_as(pred)))) / (2 * h);
      const double an = grad.flatten()[k].item<double>();
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-3));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("VGG extractors") {
  auto perceptual = VggExtractor(VggConfig::perceptual(16));
  auto contrastive = VggExtractor(VggConfig::contrastive(16));
  CHECK(perceptual.tap_count() == 3);
  CHECK(contrastive.tap_count() == 5);

  torch::manual_seed(5);
  auto x = (torch::rand({2, 3, 32, 32}) * 2 - 1).requires_grad_(true);
  auto f1 = perceptual.features(x);
  auto f2 = VggExtractor(VggConfig::perceptual(16)).features(x);
  REQUIRE(f1.size() == 3);
  for (size_t i = 0; i < f1.size(); ++i) {
    CHECK(torch::equal(f1[i], f2[i]));
    CHECK(f1[i].size(0) == 2);
  }
  CHECK(f1[0].size(2) == 16);
  CHECK(f1[2].size(2) == 4);

  f1.back().sum().backward();
  CHECK(x.grad().abs().sum().item<double>() > 0.0);

  auto fc = contrastive.features(x.detach());
  CHECK(fc[0].size(2) == 32);
  CHECK(fc[4].size(2) == 2);

  auto missing = testutil::scratch_dir("vgg") / "absent.pt";
  CHECK_THROWS_AS(perceptual.load_weights(missing), FeatureBackendError);
  CHECK(make_vgg_extractor(VggConfig::perceptual(16), missing)->tap_count() == 3);
}
