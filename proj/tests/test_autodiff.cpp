#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shapecm/autodiff/grad_check.hpp"
#include "shapecm/autodiff/param_vector.hpp"
#include "shapecm/autodiff/tape.hpp"
#include "test_util.hpp"

using namespace shapecm;
using namespace shapecm::ad;
using shapecm::testing::check_tape_fn;
using shapecm::testing::random_array;

TEST_CASE("tanh node at the origin") {
  Tape tape;
  Var x = tape.leaf(0.0);
  Var y = tanh(x);
  CHECK(tape.scalar(y) == 0.0);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(1.0));
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape tape;
  Var x = tape.leaf(ArrayXd::Constant(4, 3.7));
  Var s = softmax(x);
  for (int i = 0; i < 4; ++i)
    CHECK(tape.value(s)[i] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("log of exp is the identity with unit adjoint") {
  Tape tape;
  Var x = tape.leaf(1.37);
  Var y = log(exp(x));
  CHECK(tape.scalar(y) == doctest::Approx(1.37).epsilon(1e-14));
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sum of parameters has an all-ones gradient") {
  RngStream rng(7);
  Tape tape;
  Var x = tape.leaf(random_array(9, rng, -2.0, 2.0));
  Var y = sum(x);
  tape.backward(y);
  for (int i = 0; i < 9; ++i) CHECK(tape.grad(x)[i] == 1.0);
}

TEST_CASE("square gradient is 2x") {
  Tape tape;
  Var x = tape.leaf(3.0);
  Var y = square(x);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape tape;
  Var x = tape.leaf(ArrayXd::Constant(3, 1.0));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.leaf(ArrayXd::Constant(4, 1.0));
  Var b = tape.leaf(ArrayXd::Constant(5, 1.0));
  CHECK_THROWS_WITH_AS(a + b, "add: shape mismatch (4 vs 5)",
                       std::invalid_argument);
}

TEST_CASE("running backward twice yields identical gradients") {
  RngStream rng(11);
  Tape tape;
  Var x = tape.leaf(random_array(6, rng, 0.3, 1.8));
  Var y = sum(log(x) * tanh(x) + exp(scale(x, -0.5)));
  tape.backward(y);
  const ArrayXd g1 = tape.grad(x);
  tape.backward(y);
  const ArrayXd g2 = tape.grad(x);
  for (int i = 0; i < 6; ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("softmax output sums to one and stays positive") {
  RngStream rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Var x = tape.leaf(random_array(16, rng, -400.0, 400.0));
    Var s = softmax(x);
    CHECK(std::abs(tape.value(s).sum() - 1.0) <= 1e-12);
    CHECK((tape.value(s) > 0.0).all());
  }
}

namespace {

std::uint64_t fnv_seed(const char* s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 1099511628211ULL;
  return h;
}

/// Runs FD checks for one op builder on `trials` random parameter draws.
void op_fd_trials(
    const char* name,
    const std::function<ad::ParamVector(RngStream&)>& make_params,
    const std::function<Var(Tape&, const BoundParams&)>& build, int trials,
    double tol = 1e-5) {
  RngStream rng(fnv_seed(name));
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const ad::ParamVector at = make_params(rng);
    const GradCheckResult res = check_tape_fn(build, at);
    CHECK(res.finite);
    worst = std::max(worst, res.max_rel_error);
  }
  INFO(std::string(name));
  CHECK(worst < tol);
}

}  // namespace

TEST_CASE("every op kind matches central finite differences") {
  constexpr int kTrials = 100;
  RngStream seeder(101);

  // Signed ranges sample magnitude in (0.25, hi) with a random sign: values
  // near zero make the central difference itself ill-conditioned without
  // testing anything extra about the backward pass.
  auto draw = [](Eigen::Index n, RngStream& rng, double lo, double hi) {
    if (lo >= 0.0) return random_array(n, rng, lo, hi);
    Eigen::ArrayXd out = random_array(n, rng, 0.25, hi);
    for (Eigen::Index i = 0; i < n; ++i)
      if (rng.uniform() < 0.5) out[i] = -out[i];
    return out;
  };
  auto vec_params = [&](Eigen::Index na, Eigen::Index nb, double lo,
                        double hi) {
    return [=](RngStream& rng) {
      ad::ParamVector pv;
      pv.add("a", na);
      if (nb > 0) pv.add("b", nb);
      pv.segment("a") = draw(na, rng, lo, hi);
      if (nb > 0) pv.segment("b") = draw(nb, rng, lo, hi);
      return pv;
    };
  };
  // Weighted scalar read-out so every output element contributes.
  auto readout = [](Tape& t, Var y) {
    const Eigen::Index n = t.value(y).size();
    ArrayXd w(n);
    for (Eigen::Index i = 0; i < n; ++i)
      w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return dot(y, t.leaf(w));
  };

  op_fd_trials("add", vec_params(6, 6, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, p["a"] + p["b"]);
               },
               kTrials);
  op_fd_trials("sub", vec_params(6, 6, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, p["a"] - p["b"]);
               },
               kTrials);
  op_fd_trials("mul", vec_params(6, 6, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, p["a"] * p["b"]);
               },
               kTrials);
  op_fd_trials("div", vec_params(6, 6, 0.4, 2.5),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, p["a"] / p["b"]);
               },
               kTrials);
  op_fd_trials("neg", vec_params(6, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, -p["a"]);
               },
               kTrials);
  op_fd_trials("exp", vec_params(6, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, exp(p["a"]));
               },
               kTrials);
  op_fd_trials("log", vec_params(6, 0, 0.3, 3.0),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, log(p["a"]));
               },
               kTrials);
  op_fd_trials("square", vec_params(6, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, square(p["a"]));
               },
               kTrials);
  op_fd_trials("sqrt", vec_params(6, 0, 0.3, 3.0),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, sqrt(p["a"]));
               },
               kTrials);
  op_fd_trials("tanh", vec_params(6, 0, -2.5, 2.5),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, tanh(p["a"]));
               },
               kTrials);
  op_fd_trials("softplus", vec_params(6, 0, -4, 4),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, softplus(p["a"]));
               },
               kTrials);
  op_fd_trials("scale", vec_params(6, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, scale(p["a"], -1.7));
               },
               kTrials);
  op_fd_trials("shift", vec_params(6, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, shift(p["a"], 0.9));
               },
               kTrials);
  // Clamp kink kept away from the sampled values.
  op_fd_trials("clamp_min", vec_params(6, 0, 0.5, 2.0),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, clamp_min(p["a"], -1.0) +
                                       clamp_min(p["a"], 10.0));
               },
               kTrials);
  op_fd_trials("matvec",
               [&](RngStream& rng) {
                 ad::ParamVector pv;
                 pv.add("a", 3, 4);
                 pv.add("b", 4);
                 pv.segment("a") = random_array(12, rng, -1, 1);
                 pv.segment("b") = random_array(4, rng, -1, 1);
                 return pv;
               },
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, matvec(p["a"], p["b"], 3, 4));
               },
               kTrials);
  op_fd_trials("matmul",
               [&](RngStream& rng) {
                 ad::ParamVector pv;
                 pv.add("a", 3, 4);
                 pv.add("b", 4, 2);
                 pv.segment("a") = random_array(12, rng, -1, 1);
                 pv.segment("b") = random_array(8, rng, -1, 1);
                 return pv;
               },
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, matmul(p["a"], p["b"], 3, 4, 2));
               },
               kTrials);
  op_fd_trials("softmax", vec_params(8, 0, -3, 3),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, softmax(p["a"]));
               },
               kTrials);
  op_fd_trials("segment_softmax", vec_params(12, 0, -3, 3),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, segment_softmax(p["a"], 4));
               },
               kTrials);
  op_fd_trials("segment_sum", vec_params(12, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, segment_sum(p["a"], 3));
               },
               kTrials);
  op_fd_trials("sum", vec_params(7, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return sum(p["a"]);
               },
               kTrials);
  op_fd_trials("dot", vec_params(7, 7, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return dot(p["a"], p["b"]);
               },
               kTrials);
  op_fd_trials("broadcast", vec_params(1, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, broadcast(p["a"], 5));
               },
               kTrials);
  op_fd_trials("tile", vec_params(4, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, tile(p["a"], 3));
               },
               kTrials);
  op_fd_trials("repeat_interleave", vec_params(4, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, repeat_interleave(p["a"], 3));
               },
               kTrials);
  op_fd_trials("slice", vec_params(8, 0, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, slice(p["a"], 2, 4));
               },
               kTrials);
  op_fd_trials("concat", vec_params(4, 3, -2, 2),
               [&](Tape& t, const BoundParams& p) {
                 return readout(t, concat({p["a"], p["b"], p["a"]}));
               },
               kTrials);
  (void)seeder;
}

TEST_CASE("composite graphs keep adjoints finite") {
  RngStream rng(301);
  for (int trial = 0; trial < 25; ++trial) {
    Tape tape;
    Var x = tape.leaf(random_array(10, rng, -3.0, 3.0));
    Var s = softmax(x);
    Var y = sum(clamp_min(log(s), -69.0) * s) +
            dot(tanh(x), softplus(-x)) + sqrt(sum(square(x)) + shift(sum(s), 1.0));
    tape.backward(y);
    CHECK(tape.grad(x).isFinite().all());
  }
}

TEST_CASE("check_gradients on a constant reports zero error") {
  ad::ParamVector pv;
  pv.add("a", 4);
  pv.segment("a") = ArrayXd::Constant(4, 0.7);
  auto f = [](const ad::ParamVector&) { return 3.25; };
  auto g = [](const ad::ParamVector& p) { return p.zeros_like(); };
  const GradCheckResult res = ad::check_gradients(f, g, pv, 1e-6);
  CHECK(res.finite);
  CHECK(res.max_rel_error == 0.0);
}

TEST_CASE("check_gradients flags non-finite probes with the index") {
  ad::ParamVector pv;
  pv.add("a", 3);
  pv.segment("a") = ArrayXd::Constant(3, 1.0);
  auto f = [](const ad::ParamVector& p) {
    return p.values()[1] > 1.0 ? std::numeric_limits<double>::quiet_NaN()
                               : p.values().sum();
  };
  auto g = [](const ad::ParamVector& p) {
    ad::ParamVector out = p.zeros_like();
    out.values().setConstant(1.0);
    return out;
  };
  const GradCheckResult res = ad::check_gradients(f, g, pv, 1e-6);
  CHECK_FALSE(res.finite);
  CHECK(res.worst_index == 1);
}

TEST_CASE("two stacked tanh layers pass the gradient check") {
  RngStream rng(401);
  ad::ParamVector pv;
  pv.add("w1", 64, 64);
  pv.add("b1", 64);
  pv.add("w2", 64, 64);
  pv.add("b2", 64);
  pv.add("x", 64);
  // Pre-activations kept in tanh's responsive band (neither saturated nor
  // at zero) so no gradient entry sits in FD roundoff.
  pv.segment("w1") = random_array(64 * 64, rng, 0.005, 0.02);
  pv.segment("b1") = random_array(64, rng, 0.05, 0.15);
  pv.segment("w2") = random_array(64 * 64, rng, 0.005, 0.02);
  pv.segment("b2") = random_array(64, rng, 0.05, 0.15);
  pv.segment("x") = random_array(64, rng, 0.5, 1.5);
  const GradCheckResult res = check_tape_fn(
      [](Tape& t, const BoundParams& p) {
        Var h = tanh(matvec(p["w1"], p["x"], 64, 64) + p["b1"]);
        Var o = tanh(matvec(p["w2"], h, 64, 64) + p["b2"]);
        return sum(o);
      },
      pv);
  CHECK(res.finite);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("paramvec serialization round-trips exactly") {
  RngStream rng(501);
  ad::ParamVector pv;
  pv.add("w", 3, 5);
  pv.add("b", 7);
  pv.segment("w") = random_array(15, rng, -3, 3);
  pv.segment("b") = random_array(7, rng, -3, 3);
  std::stringstream ss;
  pv.save(ss);
  const ad::ParamVector back = ad::ParamVector::load(ss);
  REQUIRE(back.same_layout(pv));
  for (Eigen::Index i = 0; i < pv.size(); ++i)
    CHECK(back.values()[i] == pv.values()[i]);
}

TEST_CASE("paramvec segments tile the flat array exactly") {
  ad::ParamVector pv;
  pv.add("a", 2, 3);
  pv.add("b", 4);
  Eigen::Index expect = 0;
  for (const auto& seg : pv.segments()) {
    CHECK(seg.offset == expect);
    expect += seg.size();
  }
  CHECK(expect == pv.size());
  CHECK_THROWS_AS(pv.add("a", 1, 1), std::invalid_argument);
}
