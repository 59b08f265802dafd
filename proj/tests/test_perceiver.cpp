#include <doctest.h>

#include <cmath>

#include "jala/fdcheck.hpp"
#include "jala/perceiver.hpp"

using namespace jala;

namespace {

PerceiverConfig tiny_cfg() {
  PerceiverConfig cfg;
  cfg.layers = 2;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.kv_dim = 6;
  cfg.latents = 4;
  cfg.head_hidden = 16;
  return cfg;
}

std::vector<double> frame(std::uint64_t seed, int dim) {
  Rng r(seed);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = r.normal();
  return v;
}

}  // namespace

TEST_CASE("forward is deterministic and the state role duplicates the frame") {
  PerceiverConfig cfg = tiny_cfg();
  Rng rng(41);
  PerceiverParams<double> p = PerceiverParams<double>::init(cfg, rng);
  auto view = PerceiverView<double>::of(p, true, true);
  auto a = frame(1, cfg.kv_dim);
  auto b = frame(2, cfg.kv_dim);

  Tensor<double> z1 = lap_forward(cfg, view, a, b, HandSide::right);
  Tensor<double> z2 = lap_forward(cfg, view, a, b, HandSide::right);
  CHECK(z1.rows() == cfg.latents);
  CHECK(z1.cols() == cfg.dim);
  for (std::size_t i = 0; i < z1.values().size(); ++i) CHECK(z1.values()[i] == z2.values()[i]);

  // The state perceiver is the same map on a duplicated frame.
  Tensor<double> zs = lsp_forward(cfg, view, a, HandSide::right);
  Tensor<double> zd = lap_forward(cfg, view, a, a, HandSide::right);
  for (std::size_t i = 0; i < zs.values().size(); ++i) CHECK(zs.values()[i] == zd.values()[i]);

  // Hand sides select different head halves.
  Tensor<double> zl = lap_forward(cfg, view, a, b, HandSide::left);
  double diff = 0;
  for (std::size_t i = 0; i < zl.values().size(); ++i) diff += std::abs(zl.values()[i] - z1.values()[i]);
  CHECK(diff > 0);

  // Mismatched frame shapes are rejected.
  CHECK_THROWS_AS((void)lap_forward(cfg, view, a, frame(3, cfg.kv_dim - 1), HandSide::right), Error);
}

TEST_CASE("align loss arithmetic and gradient routing through views") {
  PerceiverConfig cfg = tiny_cfg();
  Rng rng(42);
  PerceiverParams<double> p = PerceiverParams<double>::init(cfg, rng);

  // h = z gives zero.
  Tensor<double> z = lap_forward(cfg, PerceiverView<double>::of(p, true, true), frame(1, 6),
                                 frame(2, 6), HandSide::right);
  Tensor<double> z_copy = Tensor<double>::from_values(z.shape(), z.values());
  CHECK(align_loss(z, z_copy).item() == doctest::Approx(0.0));

  // Hand arithmetic: h=[1,0], z=[0,1] -> mean |.| = 1.
  Tensor<double> h1 = Tensor<double>::from_values({1, 2}, {1.0, 0.0});
  Tensor<double> z1 = Tensor<double>::from_values({1, 2}, {0.0, 1.0});
  CHECK(align_loss(h1, z1).item() == doctest::Approx(1.0));

  // Detached trunk receives no gradient; live queries do.
  auto view = PerceiverView<double>::of(p, false, true);
  Tensor<double> out = lap_forward(cfg, view, frame(3, 6), frame(4, 6), HandSide::right);
  Tensor<double> target = Tensor<double>::zeros(out.shape());
  p.backbone.zero_grads();
  p.queries.zero_grads();
  align_loss(out, target).backward();
  for (auto& [name, t] : p.backbone.items) CHECK_FALSE(t.has_grad());
  double qnorm = 0;
  for (double g : p.queries.items[0].second.grad()) qnorm += g * g;
  CHECK(qnorm > 0);
}

TEST_CASE("align gradient matches finite differences away from ties") {
  PerceiverConfig cfg = tiny_cfg();
  Rng rng(43);
  PerceiverParams<double> p = PerceiverParams<double>::init(cfg, rng);
  auto a = frame(5, 6);
  auto b = frame(6, 6);
  // Fixed target far from the output so |h - z| has no ties at zero.
  Tensor<double> target = Tensor<double>::filled({cfg.latents, cfg.dim}, 3.0);

  Tensor<double>& queries = p.queries.items[0].second;
  auto objective = [&](const std::vector<double>& q) {
    queries.values() = q;
    auto view = PerceiverView<double>::of(p, false, true);
    return align_loss(lap_forward(cfg, view, a, b, HandSide::right), target).item();
  };
  const std::vector<double> at = queries.values();
  auto fd = finite_difference_gradient<double>(objective, at, 1e-6);
  queries.values() = at;
  p.queries.zero_grads();
  auto view = PerceiverView<double>::of(p, false, true);
  align_loss(lap_forward(cfg, view, a, b, HandSide::right), target).backward();
  CHECK(max_relative_error(queries.grad(), fd) < 1e-5);
}

TEST_CASE("decoupled ema update follows the two formulas exactly") {
  PerceiverConfig cfg = tiny_cfg();
  Rng rng(44);
  PerceiverParams<double> lap = PerceiverParams<double>::init(cfg, rng);
  PerceiverParams<double> lsp = PerceiverParams<double>::init(cfg, rng);

  // alpha = 0: lap trunk copies lsp trunk, lsp queries copy lap queries.
  {
    PerceiverParams<double> l = lap.clone(), s = lsp.clone();
    decoupled_ema_update(l, s, 0.0);
    for (std::size_t i = 0; i < l.backbone.items.size(); ++i)
      CHECK(l.backbone.items[i].second.values() == lsp.backbone.items[i].second.values());
    CHECK(s.queries.items[0].second.values() == lap.queries.items[0].second.values());
    // Untouched halves are bitwise unchanged.
    for (std::size_t i = 0; i < s.backbone.items.size(); ++i)
      CHECK(s.backbone.items[i].second.values() == lsp.backbone.items[i].second.values());
    CHECK(l.queries.items[0].second.values() == lap.queries.items[0].second.values());
  }

  // alpha = 0.5 midpoint on a hand-made single value.
  {
    PerceiverParams<double> l = lap.clone(), s = lsp.clone();
    l.backbone.items[0].second.values()[0] = 2.0;
    s.backbone.items[0].second.values()[0] = 0.0;
    decoupled_ema_update(l, s, 0.5);
    CHECK(l.backbone.items[0].second.values()[0] == 1.0);
  }

  // Geometric decay: 1000 updates against a zero source.
  {
    PerceiverParams<double> l = lap.clone(), s = lsp.clone();
    for (auto& [n, t] : l.backbone.items) t.values().assign(t.values().size(), 1.0);
    for (auto& [n, t] : s.backbone.items) t.values().assign(t.values().size(), 0.0);
    for (int i = 0; i < 1000; ++i) decoupled_ema_update(l, s, 0.999);
    CHECK(l.backbone.items[0].second.values()[0] ==
          doctest::Approx(std::pow(0.999, 1000)).epsilon(1e-9));
    CHECK(std::abs(l.backbone.items[0].second.values()[0] - 0.3677) < 1e-3);
  }

  // Fixed point: identical halves are left untouched. Exact at alpha values
  // where a*x + (1-a)*x rounds to x (0 and 0.5); within an ulp otherwise.
  for (double alpha : {0.0, 0.5}) {
    PerceiverParams<double> l = lap.clone();
    PerceiverParams<double> s = lap.clone();
    PerceiverParams<double> before = lap.clone();
    decoupled_ema_update(l, s, alpha);
    for (std::size_t i = 0; i < l.backbone.items.size(); ++i)
      CHECK(l.backbone.items[i].second.values() == before.backbone.items[i].second.values());
    CHECK(s.queries.items[0].second.values() == before.queries.items[0].second.values());
  }
  {
    PerceiverParams<double> l = lap.clone();
    PerceiverParams<double> s = lap.clone();
    PerceiverParams<double> before = lap.clone();
    decoupled_ema_update(l, s, 0.9);
    for (std::size_t i = 0; i < l.backbone.items.size(); ++i)
      for (std::size_t j = 0; j < l.backbone.items[i].second.values().size(); ++j) {
        const double got = l.backbone.items[i].second.values()[j];
        const double want = before.backbone.items[i].second.values()[j];
        CHECK(std::abs(got - want) <= 1e-15 * std::max(1.0, std::abs(want)));
      }
  }

  CHECK_THROWS_AS(decoupled_ema_update(lap, lsp, 1.0), Error);
  CHECK_THROWS_AS(decoupled_ema_update(lap, lsp, -0.1), Error);
}

TEST_CASE("latent batch stddev is zero for identical rows and positive otherwise") {
  std::vector<Tensor<double>> same = {Tensor<double>::filled({2, 3}, 1.5),
                                      Tensor<double>::filled({2, 3}, 1.5)};
  CHECK(latent_batch_stddev(same) == doctest::Approx(0.0));
  std::vector<Tensor<double>> diff = {Tensor<double>::filled({2, 3}, 0.0),
                                      Tensor<double>::filled({2, 3}, 2.0)};
  CHECK(latent_batch_stddev(diff) == doctest::Approx(1.0));
}
