#include "doctest.h"

#include <cmath>

#include "geoadapt/gradcheck.hpp"
#include "geoadapt/graph.hpp"

using namespace geoadapt;

namespace {

Tensor identity(size_t d) {
  Tensor t({d, d});
  for (size_t i = 0; i < d; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor random_tensor(std::vector<size_t> shape, RandomStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Brute-force softmax oracle, independent of the graph kernel.
std::vector<double> softmax_oracle(const std::vector<double>& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("affine identity case") {
  ParameterStore ps;
  ps.add("weight", identity(2));
  ps.add("bias", Tensor({2}));
  Tensor out = apply_layer("affine", ps, {Tensor::row({1.0, 2.0})});
  CHECK(out.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(out.at(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("affine shape mismatch raises dimension error") {
  ParameterStore ps;
  ps.add("weight", identity(3));
  ps.add("bias", Tensor({3}));
  CHECK_THROWS_AS(apply_layer("affine", ps, {Tensor::row({1.0, 2.0})}), DimensionError);
}

TEST_CASE("layer_norm hand-computed row") {
  // (x - mu)/sigma with mu = 4, sigma = sqrt(8/3), population variance.
  ParameterStore ps;
  Tensor gain({3});
  gain.fill(1.0);
  ps.add("gain", gain);
  ps.add("bias", Tensor({3}));
  Tensor out = apply_layer("layer_norm", ps, {Tensor::row({2.0, 4.0, 6.0})});
  const double expect = 2.0 / std::sqrt(8.0 / 3.0);
  CHECK(out.at(0, 0) == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.at(0, 2) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("layer_norm row statistics") {
  RandomStream rng(11);
  ParameterStore ps;
  Tensor gain({8});
  gain.fill(1.0);
  ps.add("gain", gain);
  ps.add("bias", Tensor({8}));
  Tensor x = random_tensor({5, 8}, rng, 3.0);
  Tensor out = apply_layer("layer_norm", ps, {x});
  for (size_t i = 0; i < 5; ++i) {
    double mu = 0.0, var = 0.0;
    for (size_t j = 0; j < 8; ++j) mu += out.at(i, j);
    mu /= 8.0;
    for (size_t j = 0; j < 8; ++j) var += (out.at(i, j) - mu) * (out.at(i, j) - mu);
    var /= 8.0;
    CHECK(std::abs(mu) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-10);
  }
}

TEST_CASE("mha uniform attention with zeroed query/key projections") {
  // Zero q/k projections make all logits equal; softmax of an all-zero row is
  // uniform, so every query averages the value rows.
  ParameterStore ps;
  ps.add("q.weight", Tensor({2, 2}));
  ps.add("q.bias", Tensor({2}));
  ps.add("k.weight", Tensor({2, 2}));
  ps.add("k.bias", Tensor({2}));
  ps.add("v.weight", identity(2));
  ps.add("v.bias", Tensor({2}));
  ps.add("out.weight", identity(2));
  ps.add("out.bias", Tensor({2}));
  Tensor kv({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor q({3, 2}, {5.0, -1.0, 0.0, 0.0, 2.0, 7.0});
  Tensor out = apply_layer("mha", ps, {q, kv}, 1);

  auto probs = softmax_oracle({0.0, 0.0});
  for (size_t i = 0; i < 3; ++i) {
    CHECK(out.at(i, 0) == doctest::Approx(probs[0]).epsilon(1e-14));
    CHECK(out.at(i, 1) == doctest::Approx(probs[1]).epsilon(1e-14));
  }
}

TEST_CASE("softmax rows sum to one") {
  RandomStream rng(3);
  Tensor t = random_tensor({40, 17}, rng, 20.0);
  softmax_rows_inplace(t);
  for (size_t i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (size_t j = 0; j < t.cols(); ++j) s += t.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("backward of w^2") {
  ParameterStore ps;
  ps.add("w", Tensor({1, 1}, {3.0}));
  Graph g;
  ValueRef w = g.param(ps.get("w"));
  // mse(w, 0) over a single element equals w^2.
  ValueRef loss = g.mse(w, Tensor({1, 1}));
  g.backward(loss);
  g.flush_param_grads();
  CHECK(ps.get("w").grad[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward chain rule through affine and mse") {
  // loss = (W*x - y)^2 with x = 1, W = 2, y = 0 -> dloss/dW = 2*2*1 = 4.
  ParameterStore ps;
  ps.add("weight", Tensor({1, 1}, {2.0}));
  ps.add("bias", Tensor({1}));
  Graph g;
  ValueRef x = g.constant(Tensor({1, 1}, {1.0}), "x");
  ValueRef y = g.affine(x, ps.get("weight"), ps.get("bias"), "lin");
  ValueRef loss = g.mse(y, Tensor({1, 1}));
  g.backward(loss);
  g.flush_param_grads();
  CHECK(ps.get("weight").grad[0] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(ps.get("bias").grad[0] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("backward twice raises stale-graph error") {
  ParameterStore ps;
  ps.add("w", Tensor({1, 1}, {1.5}));
  Graph g;
  ValueRef loss = g.mse(g.param(ps.get("w")), Tensor({1, 1}));
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), NumericError);
}

TEST_CASE("non-finite output aborts with layer name") {
  ParameterStore ps;
  Tensor w({1, 1});
  w[0] = 1e308;
  ps.add("weight", w);
  ps.add("bias", Tensor({1}));
  Graph g;
  ValueRef x = g.constant(Tensor({1, 1}, {1e308}), "x");
  try {
    g.affine(x, ps.get("weight"), ps.get("bias"), "exploding");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("exploding") != std::string::npos);
  }
}

TEST_CASE("grad_check: affine on random 4x4") {
  RandomStream rng(42);
  ParameterStore ps;
  ps.add("weight", random_tensor({4, 4}, rng, 0.7));
  ps.add("bias", random_tensor({4}, rng, 0.3));
  Tensor x = random_tensor({4, 4}, rng);
  Tensor target = random_tensor({4, 4}, rng);
  double err = grad_check(
      [&](Graph& g) {
        ValueRef xr = g.constant(x, "x");
        return g.mse(g.affine(xr, ps.get("weight"), ps.get("bias"), "lin"), target);
      },
      ps);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check: every primitive") {
  RandomStream rng(7);
  const size_t d = 8, n = 5;
  Tensor x = random_tensor({n, d}, rng);
  Tensor target = random_tensor({n, d}, rng);

  SUBCASE("layer_norm") {
    ParameterStore ps;
    ps.add("gain", random_tensor({d}, rng, 0.5));
    ps.add("bias", random_tensor({d}, rng, 0.5));
    double err = grad_check(
        [&](Graph& g) {
          ValueRef xr = g.constant(x, "x");
          return g.mse(g.layer_norm(xr, ps.get("gain"), ps.get("bias"), "ln"), target);
        },
        ps);
    CHECK(err < 1e-6);
  }

  SUBCASE("mha two heads incl self-attention") {
    ParameterStore ps;
    for (const char* nm : {"q", "k", "v", "out"}) {
      ps.add(std::string(nm) + ".weight", random_tensor({d, d}, rng, 0.4));
      ps.add(std::string(nm) + ".bias", random_tensor({d}, rng, 0.2));
    }
    double err = grad_check(
        [&](Graph& g) {
          ValueRef xr = g.constant(x, "x");
          ValueRef y = g.mha(xr, xr, ps.get("q.weight"), ps.get("q.bias"), ps.get("k.weight"),
                             ps.get("k.bias"), ps.get("v.weight"), ps.get("v.bias"),
                             ps.get("out.weight"), ps.get("out.bias"), 2, "attn");
          return g.mse(y, target);
        },
        ps);
    CHECK(err < 1e-6);
  }

  SUBCASE("gelu_mlp") {
    ParameterStore ps;
    ps.add("in.weight", random_tensor({4 * d, d}, rng, 0.4));
    ps.add("in.bias", random_tensor({4 * d}, rng, 0.2));
    ps.add("out.weight", random_tensor({d, 4 * d}, rng, 0.4));
    ps.add("out.bias", random_tensor({d}, rng, 0.2));
    double err = grad_check(
        [&](Graph& g) {
          ValueRef xr = g.constant(x, "x");
          return g.mse(g.gelu_mlp(xr, ps.get("in.weight"), ps.get("in.bias"),
                                  ps.get("out.weight"), ps.get("out.bias"), "mlp"),
                       target);
        },
        ps);
    CHECK(err < 1e-6);
  }

  SUBCASE("lora_affine") {
    const int r = 3;
    // Base layer lives outside the checked store: its autodiff gradient is
    // forced to zero by design, so finite differences would disagree.
    ParamTensor w0("weight", random_tensor({d, d}, rng, 0.4), false);
    ParamTensor b0("bias", random_tensor({d}, rng, 0.2), false);
    ParameterStore ps;
    ps.add("lora_a", random_tensor({static_cast<size_t>(r), d}, rng, 0.3));
    ps.add("lora_b", random_tensor({d, static_cast<size_t>(r)}, rng, 0.3));
    double err = grad_check(
        [&](Graph& g) {
          ValueRef xr = g.constant(x, "x");
          return g.mse(g.lora_affine(xr, w0, b0, ps.get("lora_a"), ps.get("lora_b"), 2.0 * r, r,
                                     "lora"),
                       target);
        },
        ps);
    CHECK(err < 1e-6);
    // Base weights receive zero gradient through the lora path.
    Graph g;
    ValueRef xr = g.constant(x, "x");
    ValueRef loss = g.mse(g.lora_affine(xr, w0, b0, ps.get("lora_a"), ps.get("lora_b"), 2.0 * r,
                                        r, "lora"),
                          target);
    g.backward(loss);
    Tensor wg = g.param_grad(w0);
    for (size_t i = 0; i < wg.numel(); ++i) CHECK(wg[i] == 0.0);
  }
}

TEST_CASE("grad_check: 2-block mini transformer at d=8") {
  RandomStream rng(123);
  const size_t d = 8, n = 6;
  ParameterStore ps;
  auto add_block = [&](const std::string& prefix) {
    Tensor ones({d});
    ones.fill(1.0);
    ps.add(prefix + ".norm1.gain", ones);
    ps.add(prefix + ".norm1.bias", Tensor({d}));
    for (const char* nm : {"q", "k", "v", "out"}) {
      ps.add(prefix + ".attn." + nm + ".weight", random_tensor({d, d}, rng, 0.3));
      ps.add(prefix + ".attn." + nm + ".bias", random_tensor({d}, rng, 0.1));
    }
    ps.add(prefix + ".norm2.gain", ones);
    ps.add(prefix + ".norm2.bias", Tensor({d}));
    ps.add(prefix + ".mlp.in.weight", random_tensor({4 * d, d}, rng, 0.3));
    ps.add(prefix + ".mlp.in.bias", random_tensor({4 * d}, rng, 0.1));
    ps.add(prefix + ".mlp.out.weight", random_tensor({d, 4 * d}, rng, 0.3));
    ps.add(prefix + ".mlp.out.bias", random_tensor({d}, rng, 0.1));
  };
  add_block("b0");
  add_block("b1");
  Tensor x = random_tensor({n, d}, rng);
  Tensor target = random_tensor({n, d}, rng);

  auto block = [&](Graph& g, ValueRef h, const std::string& p) {
    ValueRef normed = g.layer_norm(h, ps.get(p + ".norm1.gain"), ps.get(p + ".norm1.bias"),
                                   p + ".norm1");
    ValueRef att = g.mha(normed, normed, ps.get(p + ".attn.q.weight"), ps.get(p + ".attn.q.bias"),
                         ps.get(p + ".attn.k.weight"), ps.get(p + ".attn.k.bias"),
                         ps.get(p + ".attn.v.weight"), ps.get(p + ".attn.v.bias"),
                         ps.get(p + ".attn.out.weight"), ps.get(p + ".attn.out.bias"), 2,
                         p + ".attn");
    h = g.add(h, att, p + ".res1");
    ValueRef normed2 =
        g.layer_norm(h, ps.get(p + ".norm2.gain"), ps.get(p + ".norm2.bias"), p + ".norm2");
    ValueRef mlp = g.gelu_mlp(normed2, ps.get(p + ".mlp.in.weight"), ps.get(p + ".mlp.in.bias"),
                              ps.get(p + ".mlp.out.weight"), ps.get(p + ".mlp.out.bias"),
                              p + ".mlp");
    return g.add(h, mlp, p + ".res2");
  };

  double err = grad_check(
      [&](Graph& g) {
        ValueRef h = g.constant(x, "x");
        h = block(g, h, "b0");
        h = block(g, h, "b1");
        return g.mse(h, target);
      },
      ps);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check: masked parameter reports zero error") {
  RandomStream rng(5);
  ParameterStore ps;
  ps.add("weight", random_tensor({2, 2}, rng));
  ps.add("bias", random_tensor({2}, rng));
  ps.add("unused", random_tensor({3, 3}, rng));
  Tensor x = random_tensor({2, 2}, rng);
  Tensor target = random_tensor({2, 2}, rng);
  Graph g;
  ValueRef loss = g.mse(g.affine(g.constant(x, "x"), ps.get("weight"), ps.get("bias"), "lin"),
                        target);
  g.backward(loss);
  Tensor ug = g.param_grad(ps.get("unused"));
  for (size_t i = 0; i < ug.numel(); ++i) CHECK(ug[i] == 0.0);
}

TEST_CASE("determinism: identical seeds give bit-identical forward and gradients") {
  auto run = [](uint64_t seed) {
    RandomStream rng(seed);
    ParameterStore ps;
    ps.add("weight", random_tensor({6, 6}, rng, 0.4));
    ps.add("bias", random_tensor({6}, rng, 0.1));
    Tensor x = random_tensor({4, 6}, rng);
    Graph g;
    ValueRef y = g.affine(g.constant(x, "x"), ps.get("weight"), ps.get("bias"), "lin");
    ValueRef loss = g.mse(y, Tensor({4, 6}));
    double lv = g.value(loss).scalar_value();
    g.backward(loss);
    return std::make_pair(lv, g.param_grad(ps.get("weight")));
  };
  auto [l1, g1] = run(99);
  auto [l2, g2] = run(99);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  CHECK(bit_identical(g1, g2));
}

TEST_CASE("residual add and unreachable grads stay zero") {
  ParameterStore ps;
  ps.add("a", Tensor({1, 2}, {1.0, 2.0}));
  ps.add("b", Tensor({1, 2}, {0.5, -1.0}));
  ps.zero_grads();
  Graph g;
  ValueRef sum = g.add(g.param(ps.get("a")), g.param(ps.get("a")), "res");
  ValueRef loss = g.mse(sum, Tensor({1, 2}));
  g.backward(loss);
  g.flush_param_grads();
  // b untouched by the graph: grad stays zero.
  CHECK(ps.get("b").grad[0] == 0.0);
  CHECK(ps.get("b").grad[1] == 0.0);
  // a used twice: gradient accumulates both paths. d/da mean((2a)^2) = 4a/n*2
  CHECK(ps.get("a").grad[0] == doctest::Approx(4.0 * 1.0).epsilon(1e-14));
}
