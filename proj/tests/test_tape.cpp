#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "metassm/tape.hpp"

using namespace metassm;
using namespace metassm::ad;

namespace {

// independent dense forward pass for a 2-layer net, plain loops
std::vector<double> dense_oracle(const std::vector<std::vector<double>>& Ws,
                                 const std::vector<std::vector<double>>& bs,
                                 const std::vector<int>& dims, std::vector<double> x,
                                 bool tanh_hidden) {
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    std::vector<double> z(static_cast<std::size_t>(out), 0.0);
    for (int i = 0; i < out; ++i) {
      double acc = bs[l][static_cast<std::size_t>(i)];
      for (int j = 0; j < in; ++j)
        acc += Ws[l][static_cast<std::size_t>(i * in + j)] * x[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = acc;
    }
    if (l + 2 < dims.size() && tanh_hidden)
      for (auto& v : z) v = std::tanh(v);
    x = std::move(z);
  }
  return x;
}

}  // namespace

TEST_CASE("forward basics") {
  Tape t;
  Var x = t.input(Array::scalar(3.0), "x");
  Var y = t.mul(x, x);
  CHECK(t.value(y)[0] == doctest::Approx(9.0));

  // identity on a vector
  Tape t2;
  Var v = t2.input(Array::vec({1.0, 2.0}));
  CHECK(t2.value(v)[0] == 1.0);
  CHECK(t2.value(v)[1] == 2.0);
}

TEST_CASE("forward replay rebinding named inputs reproduces values") {
  Tape t;
  Var x = t.input(Array::scalar(3.0), "x");
  Var y = t.mul(t.shift(x, 1.0), x);  // (x+1)*x
  CHECK(t.value(y)[0] == doctest::Approx(12.0));
  const Array& out = t.forward({{"x", Array::scalar(2.0)}});
  CHECK(out[0] == doctest::Approx(6.0));
  // bit-identical on replay with the same value
  const Array& again = t.forward({{"x", Array::scalar(2.0)}});
  CHECK(again[0] == out[0]);
  CHECK_THROWS_WITH_AS(t.forward({{"z", Array::scalar(1.0)}}),
                       doctest::Contains("no input named"), Error);
  CHECK_THROWS_WITH_AS(t.forward({{"x", Array::vec({1.0, 2.0})}}),
                       doctest::Contains("shape"), Error);
}

TEST_CASE("mlp forward matches dense oracle on fixed 2-2-1 net") {
  Rng rng(7);
  std::vector<int> dims = {2, 2, 1};
  std::vector<std::vector<double>> Ws = {{0.3, -0.4, 0.8, 0.1}, {1.2, -0.7}};
  std::vector<std::vector<double>> bs = {{0.05, -0.2}, {0.4}};
  std::vector<double> x = {0.9, -1.3};

  Tape t;
  Var v = t.input(Array::vec(x));
  for (std::size_t l = 0; l < 2; ++l) {
    const int in = dims[l], out = dims[l + 1];
    Var W = t.input(Array({out, in}, std::vector<double>(Ws[l])));
    Var b = t.input(Array::vec(bs[l]));
    v = t.add(t.matmul(W, v), b);
    if (l == 0) v = t.tanh(v);
  }
  const auto want = dense_oracle(Ws, bs, dims, x, true);
  CHECK(t.value(v)[0] == doctest::Approx(want[0]).epsilon(1e-12));
}

TEST_CASE("gradient basics") {
  Tape t;
  Var x = t.input(Array::scalar(3.0));
  Var y = t.mul(x, x);
  Var g = t.gradient(y, x);
  CHECK(t.value(g)[0] == doctest::Approx(6.0));

  // swish'(0) = 0.5
  Tape t2;
  Var z = t2.input(Array::scalar(0.0));
  Var s = t2.swish(z);
  CHECK(t2.value(t2.gradient(s, z))[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gradient of a random 3-layer net matches central finite differences") {
  Rng rng(42);
  const std::vector<int> dims = {4, 5, 3, 1};
  std::vector<std::vector<double>> Ws, bs;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::vector<double> W(static_cast<std::size_t>(dims[l] * dims[l + 1]));
    std::vector<double> b(static_cast<std::size_t>(dims[l + 1]));
    for (auto& w : W) w = rng.uniform(-0.8, 0.8);
    for (auto& v : b) v = rng.uniform(-0.2, 0.2);
    Ws.push_back(W);
    bs.push_back(b);
  }
  std::vector<double> x0 = {0.3, -0.6, 1.1, 0.2};

  auto eval = [&](const std::vector<double>& xv) {
    Tape t;
    Var v = t.input(Array::vec(xv));
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Var W = t.input(Array({dims[l + 1], dims[l]}, std::vector<double>(Ws[l])));
      Var b = t.input(Array::vec(bs[l]));
      v = t.add(t.matmul(W, v), b);
      if (l + 2 < dims.size()) v = t.swish(v);
    }
    return t.value(t.reshape(v, {}))[0];
  };

  Tape t;
  Var x = t.input(Array::vec(x0));
  Var v = x;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Var W = t.input(Array({dims[l + 1], dims[l]}, std::vector<double>(Ws[l])));
    Var b = t.input(Array::vec(bs[l]));
    v = t.add(t.matmul(W, v), b);
    if (l + 2 < dims.size()) v = t.swish(v);
  }
  Var g = t.gradient(t.reshape(v, {}), x);
  const auto fd = testutil::fd_gradient(eval, x0);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double err =
        std::fabs(t.value(g)[i] - fd[i]) / (std::fabs(fd[i]) + 1e-12);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("per-primitive gradients match finite differences") {
  Rng rng(3);
  auto check_unary = [&](const char* name, auto build, double lo, double hi) {
    for (int trial = 0; trial < 5; ++trial) {
      const double z0 = rng.uniform(lo, hi);
      auto eval = [&](const std::vector<double>& xv) {
        Tape t;
        Var x = t.input(Array::scalar(xv[0]));
        return t.value(t.sum(build(t, x)))[0];
      };
      Tape t;
      Var x = t.input(Array::scalar(z0));
      Var g = t.gradient(t.sum(build(t, x)), x);
      const auto fd = testutil::fd_gradient(eval, {z0});
      const double err = std::fabs(t.value(g)[0] - fd[0]) / (std::fabs(fd[0]) + 1e-12);
      INFO(name, " at ", z0);
      CHECK(err < 1e-6);
    }
  };
  check_unary("sigmoid", [](Tape& t, Var x) { return t.sigmoid(x); }, -3.0, 3.0);
  check_unary("tanh", [](Tape& t, Var x) { return t.tanh(x); }, -3.0, 3.0);
  check_unary("exp", [](Tape& t, Var x) { return t.exp(x); }, -2.0, 2.0);
  check_unary("swish", [](Tape& t, Var x) { return t.swish(x); }, -3.0, 3.0);
  check_unary("relu+", [](Tape& t, Var x) { return t.relu(x); }, 0.5, 3.0);
  check_unary("relu-", [](Tape& t, Var x) { return t.relu(x); }, -3.0, -0.5);
  check_unary("elu+", [](Tape& t, Var x) { return t.elu(x); }, 0.5, 3.0);
  check_unary("elu-", [](Tape& t, Var x) { return t.elu(x); }, -3.0, -0.5);
  check_unary("abs", [](Tape& t, Var x) { return t.abs(x); }, 0.3, 3.0);
  check_unary("square", [](Tape& t, Var x) { return t.square(x); }, -2.0, 2.0);
}

TEST_CASE("gradient is linear in the output expression") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    const double x0 = rng.uniform(-1.5, 1.5);
    Tape t;
    Var x = t.input(Array::scalar(x0));
    Var f = t.swish(x);
    Var g = t.tanh(x);
    Var combo = t.add(t.scale(f, a), t.scale(g, b));
    const double dcombo = t.value(t.gradient(combo, x))[0];
    const double df = t.value(t.gradient(f, x))[0];
    const double dg = t.value(t.gradient(g, x))[0];
    CHECK(dcombo == doctest::Approx(a * df + b * dg).epsilon(1e-12));
  }
}

TEST_CASE("nested differentiation") {
  // z^3 -> second derivative 6z = 12 at z=2
  Tape t;
  Var z = t.input(Array::scalar(2.0));
  Var f = t.mul(t.mul(z, z), z);
  CHECK(hessian(t, f, z)[0] == doctest::Approx(12.0).epsilon(1e-10));

  // swish''(0) = 0.5
  Tape t2;
  Var z2 = t2.input(Array::scalar(0.0));
  CHECK(hessian(t2, t2.swish(z2), z2)[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("swish derivatives match closed forms on a grid to 1e-10") {
  for (int i = 0; i <= 200; ++i) {
    const double z0 = -10.0 + 0.1 * i;
    Tape t;
    Var z = t.input(Array::scalar(z0));
    Var s = t.swish(z);
    Var g = t.gradient(s, z);
    Var gg = t.gradient(t.reshape(g, {}), z);
    CHECK(std::fabs(t.value(s)[0] - testutil::swish(z0)) < 1e-10);
    CHECK(std::fabs(t.value(g)[0] - testutil::swish_d1(z0)) < 1e-10);
    CHECK(std::fabs(t.value(gg)[0] - testutil::swish_d2(z0)) < 1e-10);
  }
}

TEST_CASE("second derivative of a small swish MLP matches FD of the gradient") {
  Rng rng(5);
  const std::vector<int> dims = {2, 4, 1};
  std::vector<double> W0(8), b0(4), W1(4), b1(1);
  for (auto& v : W0) v = rng.uniform(-0.9, 0.9);
  for (auto& v : b0) v = rng.uniform(-0.3, 0.3);
  for (auto& v : W1) v = rng.uniform(-0.9, 0.9);
  for (auto& v : b1) v = rng.uniform(-0.3, 0.3);
  const std::vector<double> x0 = {0.4, -0.7};

  auto grad_at = [&](const std::vector<double>& xv) {
    Tape t;
    Var x = t.input(Array::vec(xv));
    Var h = t.swish(t.add(t.matmul(t.input(Array({4, 2}, std::vector<double>(W0))), x),
                          t.input(Array::vec(b0))));
    Var o = t.add(t.matmul(t.input(Array({1, 4}, std::vector<double>(W1))), h),
                  t.input(Array::vec(b1)));
    Var g = t.gradient(t.reshape(o, {}), x);
    const Array& gv = t.value(g);
    return std::vector<double>{gv[0], gv[1]};
  };

  Tape t;
  Var x = t.input(Array::vec(x0));
  Var h = t.swish(t.add(t.matmul(t.input(Array({4, 2}, std::vector<double>(W0))), x),
                        t.input(Array::vec(b0))));
  Var o = t.add(t.matmul(t.input(Array({1, 4}, std::vector<double>(W1))), h),
                t.input(Array::vec(b1)));
  const Array H = hessian(t, t.reshape(o, {}), x);

  const double h_fd = 1e-5;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      auto xp = x0, xm = x0;
      xp[static_cast<std::size_t>(j)] += h_fd;
      xm[static_cast<std::size_t>(j)] -= h_fd;
      const double fd =
          (grad_at(xp)[static_cast<std::size_t>(i)] - grad_at(xm)[static_cast<std::size_t>(i)]) /
          (2.0 * h_fd);
      CHECK(std::fabs(H.at(i, j) - fd) / (std::fabs(fd) + 1e-12) < 1e-4);
    }
}

TEST_CASE("jacobian basics") {
  // identity map
  Tape t;
  Var x = t.input(Array::vec({1.0, -2.0}));
  Array J = jacobian(t, x, x);
  CHECK(J.at(0, 0) == 1.0);
  CHECK(J.at(0, 1) == 0.0);
  CHECK(J.at(1, 0) == 0.0);
  CHECK(J.at(1, 1) == 1.0);

  // linear map -> A exactly
  Tape t2;
  Array A({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 4.0});
  Var x2 = t2.input(Array::vec({0.2, 0.4, -0.6}));
  Var f = t2.matmul(t2.input(A), x2);
  Array J2 = jacobian(t2, f, x2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(J2.at(i, j) == doctest::Approx(A.at(i, j)));
}

TEST_CASE("jacobian of a random MLP matches columnwise finite differences") {
  Rng rng(9);
  std::vector<double> W0(12), b0(4), W1(12), b1(3);
  for (auto& v : W0) v = rng.uniform(-0.8, 0.8);
  for (auto& v : b0) v = rng.uniform(-0.2, 0.2);
  for (auto& v : W1) v = rng.uniform(-0.8, 0.8);
  for (auto& v : b1) v = rng.uniform(-0.2, 0.2);
  const std::vector<double> x0 = {0.1, -0.5, 0.9};

  auto eval = [&](const std::vector<double>& xv) {
    Tape t;
    Var x = t.input(Array::vec(xv));
    Var h = t.tanh(t.add(t.matmul(t.input(Array({4, 3}, std::vector<double>(W0))), x),
                         t.input(Array::vec(b0))));
    Var o = t.add(t.matmul(t.input(Array({3, 4}, std::vector<double>(W1))), h),
                  t.input(Array::vec(b1)));
    const Array& ov = t.value(o);
    return std::vector<double>{ov[0], ov[1], ov[2]};
  };

  Tape t;
  Var x = t.input(Array::vec(x0));
  Var h = t.tanh(t.add(t.matmul(t.input(Array({4, 3}, std::vector<double>(W0))), x),
                       t.input(Array::vec(b0))));
  Var o = t.add(t.matmul(t.input(Array({3, 4}, std::vector<double>(W1))), h),
                t.input(Array::vec(b1)));
  const Array J = jacobian(t, o, x);

  const double hstep = 1e-5;
  for (int j = 0; j < 3; ++j) {
    auto xp = x0, xm = x0;
    xp[static_cast<std::size_t>(j)] += hstep;
    xm[static_cast<std::size_t>(j)] -= hstep;
    const auto fp = eval(xp), fm = eval(xm);
    for (int i = 0; i < 3; ++i) {
      const double fd = (fp[static_cast<std::size_t>(i)] - fm[static_cast<std::size_t>(i)]) /
                        (2.0 * hstep);
      CHECK(std::fabs(J.at(i, j) - fd) / (std::fabs(fd) + 1e-12) < 1e-6);
    }
  }
}

TEST_CASE("gradient errors") {
  Tape t;
  Var x = t.input(Array::vec({1.0, 2.0}));
  CHECK_THROWS_WITH_AS(t.gradient(x, x), doctest::Contains("scalar"), Error);

  // a primitive with no registered derivative is named in the error
  Tape t2;
  Var z = t2.input(Array::scalar(1.5));
  Var s = t2.sign(z);
  CHECK_THROWS_WITH_AS(t2.gradient(t2.sum(s), z), doctest::Contains("sign"), Error);

  // abs has a first derivative, but its second derivative path hits sign
  Tape t3;
  Var z3 = t3.input(Array::scalar(0.7));
  Var g = t3.gradient(t3.abs(z3), z3);
  CHECK(t3.value(g)[0] == doctest::Approx(1.0));
  CHECK_THROWS_WITH_AS(t3.gradient(t3.reshape(g, {}), z3), doctest::Contains("sign"), Error);
}

TEST_CASE("relu second derivative is zero everywhere by convention") {
  for (double z0 : {-1.0, -0.1, 0.0, 0.1, 2.0}) {
    Tape t;
    Var z = t.input(Array::scalar(z0));
    Var r = t.relu(z);
    Var g = t.gradient(r, z);
    Var gg = t.gradient(t.reshape(g, {}), z);
    CHECK(t.value(gg)[0] == 0.0);
  }
}

TEST_CASE("gradient wrt unreachable input is zeros") {
  Tape t;
  Var x = t.input(Array::scalar(1.0));
  Var y = t.input(Array::vec({2.0, 3.0}));
  Var f = t.mul(x, x);
  Var g = t.gradient(f, y);
  CHECK(t.value(g)[0] == 0.0);
  CHECK(t.value(g)[1] == 0.0);
  CHECK(t.value(g).shape() == std::vector<int>{2});
}

TEST_CASE("determinism: identical seeds give bit-identical gradients") {
  auto run = [] {
    Rng rng(123);
    Tape t;
    std::vector<double> w(6);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    Var W = t.input(Array({2, 3}, std::move(w)));
    Var x = t.input(Array::vec({0.5, -0.25, 0.125}));
    Var o = t.sum(t.swish(t.matmul(W, x)));
    Var g = t.gradient(o, W);
    const Array& gv = t.value(g);
    return std::vector<double>(gv.data(), gv.data() + gv.size());
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("concat gather scatter round trip and adjoints") {
  Tape t;
  Var a = t.input(Array::vec({1.0, 2.0}));
  Var b = t.input(Array::vec({3.0}));
  const Var parts[2] = {a, b};
  Var c = t.concat(std::span<const Var>(parts, 2));
  CHECK(t.value(c)[2] == 3.0);

  // overlapping gather: adjoints must accumulate
  Var g2 = t.gather(c, {0, 0, 2});
  Var s = t.sum(t.mul(g2, g2));
  Var ga = t.gradient(s, a);
  // d/da0 of (a0^2 + a0^2 + b0^2) = 4 a0
  CHECK(t.value(ga)[0] == doctest::Approx(4.0));
  CHECK(t.value(ga)[1] == 0.0);
}

TEST_CASE("matmul with matrix rhs and bcast_cols backward") {
  Rng rng(21);
  std::vector<double> wv(6), xv(8), bv(2);
  for (auto& v : wv) v = rng.uniform(-1.0, 1.0);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  for (auto& v : bv) v = rng.uniform(-0.5, 0.5);

  auto eval = [&](const std::vector<double>& w) {
    Tape t;
    Var W = t.input(Array({2, 3}, std::vector<double>(w)));
    Var X = t.input(Array({3, 4}, std::vector<double>(xv)));
    Var B = t.input(Array::vec(bv));
    Var out = t.tanh(t.add(t.matmul(W, X), t.bcast_cols(B, 4)));
    return t.value(t.sum(t.mul(out, out)))[0];
  };
  Tape t;
  Var W = t.input(Array({2, 3}, std::vector<double>(wv)));
  Var X = t.input(Array({3, 4}, std::vector<double>(xv)));
  Var B = t.input(Array::vec(bv));
  Var out = t.tanh(t.add(t.matmul(W, X), t.bcast_cols(B, 4)));
  Var loss = t.sum(t.mul(out, out));
  Var gW = t.gradient(loss, W);
  const auto fd = testutil::fd_gradient(eval, wv);
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(std::fabs(t.value(gW)[i] - fd[i]) / (std::fabs(fd[i]) + 1e-12) < 1e-6);
}

TEST_CASE("shape errors name the operation") {
  Tape t;
  Var a = t.input(Array::vec({1.0, 2.0}));
  Var b = t.input(Array::vec({1.0, 2.0, 3.0}));
  CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("add"), Error);
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("matmul"), Error);
}

TEST_CASE("truncate rewinds the tape") {
  Tape t;
  Var x = t.input(Array::scalar(2.0));
  const std::size_t mark = t.size();
  Var y = t.mul(x, x);
  (void)y;
  CHECK(t.size() > mark);
  t.truncate(mark);
  CHECK(t.size() == mark);
  // tape still usable
  Var z = t.shift(x, 1.0);
  CHECK(t.value(z)[0] == doctest::Approx(3.0));
}
