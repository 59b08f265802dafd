#include <doctest.h>

#include <cmath>

#include "jala/fdcheck.hpp"
#include "jala/flow.hpp"

using namespace jala;

namespace {

FlowConfig tiny_cfg() {
  FlowConfig cfg;
  cfg.denoise_steps = 4;
  cfg.depth = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.horizon = 3;
  cfg.action_dim = 2;
  cfg.proprio_dim = 2;
  cfg.h_dim = 8;
  return cfg;
}

}  // namespace

TEST_CASE("noise_action endpoints and arithmetic") {
  std::vector<double> a = {4.0}, eps = {0.0};
  CHECK(noise_action(a, 1.0, eps)[0] == 4.0);
  CHECK(noise_action(a, 0.0, eps)[0] == 0.0);
  CHECK(noise_action(a, 0.25, eps)[0] == doctest::Approx(1.0));
  // eps = A leaves the action unchanged for every tau.
  std::vector<double> same = {2.5, -1.0};
  for (double tau : {0.0, 0.3, 0.7, 1.0}) {
    auto out = noise_action(same, tau, same);
    CHECK(out[0] == doctest::Approx(2.5));
    CHECK(out[1] == doctest::Approx(-1.0));
  }
  CHECK_THROWS_AS((void)noise_action(a, 1.5, eps), Error);
  CHECK_THROWS_AS((void)noise_action(a, 0.5, std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("fm loss hits hand-computed values and its gradient checks out") {
  FlowConfig cfg = tiny_cfg();
  Rng rng(51);
  FlowHead<double> head = FlowHead<double>::init(cfg, rng);
  std::vector<double> q = {0.1, -0.2};
  Rng hr(52);
  Tensor<double> h = Tensor<double>::randn({4, cfg.h_dim}, hr, 0.5, false);

  // Zero-output head against eps=0, A=1: target is -1 everywhere, loss 1.
  // Force zero output by zeroing the final projection.
  FlowHead<double> zero_head = FlowHead<double>::init(cfg, rng);
  zero_head.params().find("out.w")->values().assign(
      zero_head.params().find("out.w")->values().size(), 0.0);
  zero_head.params().find("out.b")->values().assign(static_cast<std::size_t>(cfg.action_dim), 0.0);
  std::vector<double> action(static_cast<std::size_t>(cfg.horizon) * cfg.action_dim, 1.0);
  std::vector<double> eps(action.size(), 0.0);
  const double loss = zero_head.fm_loss(h, action, q, 0.37, eps).item();
  CHECK(loss == doctest::Approx(1.0));

  // Gradient oracle on the output projection.
  Tensor<double>* w = head.params().find("out.w");
  std::vector<double> eps2(action.size());
  Rng er(53);
  for (auto& v : eps2) v = er.normal();
  auto objective = [&](const std::vector<double>& p) {
    w->values() = p;
    return head.fm_loss(h, action, q, 0.6, eps2).item();
  };
  const std::vector<double> at = w->values();
  auto fd = finite_difference_gradient<double>(objective, at, 1e-6);
  w->values() = at;
  head.params().zero_grads();
  head.fm_loss(h, action, q, 0.6, eps2).backward();
  CHECK(max_relative_error(w->grad(), fd) < 1e-5);
}

TEST_CASE("euler sampler is exact under the analytic field") {
  FlowConfig cfg = tiny_cfg();
  std::vector<double> target(static_cast<std::size_t>(cfg.horizon) * cfg.action_dim);
  Rng tr(54);
  for (auto& v : target) v = tr.normal();

  // Analytic field consistent with the straight path: at A^tau the remaining
  // direction is (A^tau - A) / (1 - tau) = eps - A, constant along the path.
  for (int steps : {1, 2, 4, 16}) {
    FlowConfig c = cfg;
    c.denoise_steps = steps;
    FlowHead<double>::Field field = [&](const std::vector<double>& a, double tau) {
      std::vector<double> v(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) v[i] = (a[i] - target[i]) / (1.0 - tau);
      return v;
    };
    Rng sr(55);
    const auto sampled = FlowHead<double>::sample_actions(field, c, sr);
    double err = 0;
    for (std::size_t i = 0; i < sampled.size(); ++i)
      err = std::max(err, std::abs(sampled[i] - target[i]));
    CHECK(err < 1e-5);
  }

  // One-step algebra: A-hat = eps - 1 * (eps - A) = A.
  FlowConfig c1 = cfg;
  c1.denoise_steps = 1;
  std::vector<double> captured_eps;
  FlowHead<double>::Field field = [&](const std::vector<double>& a, double) {
    captured_eps = a;  // at tau=0 the state is exactly eps
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i] - target[i];
    return v;
  };
  Rng sr(56);
  const auto one = FlowHead<double>::sample_actions(field, c1, sr);
  for (std::size_t i = 0; i < one.size(); ++i)
    CHECK(one[i] == doctest::Approx(target[i]).epsilon(1e-12));

  // Same seed, same sample.
  Rng sa(57), sb(57);
  const auto s1 = FlowHead<double>::sample_actions(field, c1, sa);
  const auto s2 = FlowHead<double>::sample_actions(field, c1, sb);
  CHECK(s1 == s2);
}

TEST_CASE("velocity-convention flag flips the integrator sign") {
  FlowConfig cfg = tiny_cfg();
  cfg.target_noise_minus_data = false;
  std::vector<double> target(static_cast<std::size_t>(cfg.horizon) * cfg.action_dim, 0.7);
  FlowHead<double>::Field field = [&](const std::vector<double>& a, double tau) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = (target[i] - a[i]) / (1.0 - tau);
    return v;
  };
  Rng sr(58);
  const auto sampled = FlowHead<double>::sample_actions(field, cfg, sr);
  for (double v : sampled) CHECK(v == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("sampler rejects a non-positive step count") {
  FlowConfig cfg = tiny_cfg();
  cfg.denoise_steps = 0;
  FlowHead<double>::Field field = [](const std::vector<double>& a, double) { return a; };
  Rng sr(59);
  CHECK_THROWS_AS((void)FlowHead<double>::sample_actions(field, cfg, sr), Error);
}
