#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>

#include "relchain/checkpoint.hpp"
#include "relchain/gradcheck.hpp"
#include "relchain/ops.hpp"
#include "relchain/optim.hpp"

using namespace relchain;

TEST_CASE("matmul against identity and shape errors") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor out = matmul(a, eye, nullptr);
  for (size_t i = 0; i < 4; ++i) CHECK(out.values()[i] == a.values()[i]);

  Tensor bad = Tensor::from_values({3, 1}, {1, 2, 3});
  try {
    (void)matmul(a, bad, nullptr);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("matmul") != std::string::npos);
    CHECK(what.find("[2 x 2]") != std::string::npos);
    CHECK(what.find("[3 x 1]") != std::string::npos);
  }
}

TEST_CASE("softmax symmetry, normalization, cross-entropy basics") {
  Tensor z = Tensor::from_values({1, 2}, {0.0, 0.0});
  Tensor s = softmax(z, nullptr);
  CHECK(s.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.values()[1] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(3);
  Tensor x = Tensor::uniform({7, 5}, -20.0, 20.0, rng);
  Tensor sm = softmax(x, nullptr);
  for (int i = 0; i < 7; ++i) {
    double row = 0.0;
    for (int j = 0; j < 5; ++j) row += sm.values()[static_cast<size_t>(i * 5 + j)];
    CHECK(std::abs(row - 1.0) <= 1e-9);
  }

  // CE >= 0, equality iff the prediction is one-hot correct
  Tensor confident = Tensor::from_values({1, 3}, {1000.0, 0.0, 0.0});
  CHECK(cross_entropy(confident, {0}, nullptr).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
  Tensor uncertain = Tensor::from_values({1, 3}, {1.0, 1.0, 1.0});
  CHECK(cross_entropy(uncertain, {0}, nullptr).scalar_value() > 0.0);
}

TEST_CASE("concat widths follow the shape algebra") {
  Tensor a({4, 6});
  Tensor b({4, 3});
  CHECK(concat(a, b, 1, nullptr).shape() == Shape{4, 9});
  Tensor c({2, 6});
  CHECK(concat(a, c, 0, nullptr).shape() == Shape{6, 6});
}

TEST_CASE("x*x gradient at 3 matches the finite-difference oracle") {
  Tensor x = Tensor::from_values({1}, {3.0}).set_requires_grad(true);
  auto forward = [&](Tape* tape) {
    Tensor x2 = reshape(x, {1, 1}, tape);
    return reshape(mul(x2, x2, tape), {1}, tape);
  };
  Tape tape;
  Tensor loss = forward(&tape);
  tape.backward(loss);
  CHECK(x.grad().values()[0] == doctest::Approx(6.0).epsilon(1e-12));

  // central differences, h = 1e-5
  const double h = 1e-5;
  x.values()[0] = 3.0 + h;
  const double up = forward(nullptr).scalar_value();
  x.values()[0] = 3.0 - h;
  const double down = forward(nullptr).scalar_value();
  x.values()[0] = 3.0;
  const double fd = (up - down) / (2 * h);
  CHECK(std::abs(x.grad().values()[0] - fd) / std::abs(fd) <= 1e-6);
}

TEST_CASE("cross_entropy(softmax) gradient at uniform logits is [-0.5, +0.5]") {
  Tensor logits = Tensor::from_values({1, 2}, {0.0, 0.0}).set_requires_grad(true);
  Tape tape;
  Tensor loss = cross_entropy(logits, {0}, &tape);
  tape.backward(loss);
  CHECK(logits.grad().values()[0] == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(logits.grad().values()[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("unused parameters keep a zero gradient") {
  Tensor used = Tensor::from_values({1, 1}, {2.0}).set_requires_grad(true);
  Tensor unused = Tensor::from_values({1, 1}, {5.0}).set_requires_grad(true);
  Tape tape;
  Tensor loss = reshape(mul(used, used, &tape), {1}, &tape);
  tape.backward(loss);
  CHECK(used.grad().values()[0] == doctest::Approx(4.0));
  CHECK(unused.grad().values()[0] == 0.0);
}

TEST_CASE("backward guards: non-scalar loss and double backward") {
  Tensor x = Tensor::from_values({1, 2}, {1.0, 2.0}).set_requires_grad(true);
  Tape tape;
  Tensor y = mul(x, x, &tape);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);

  Tape tape2;
  Tensor loss = reduce_sum(mul(x, x, &tape2), 1, &tape2);
  tape2.backward(loss);
  CHECK_THROWS_AS(tape2.backward(loss), std::logic_error);
  tape2.reset();
  x.zero_grad();
  Tensor loss2 = reduce_sum(mul(x, x, &tape2), 1, &tape2);
  tape2.backward(loss2);  // fine after reset
  CHECK(x.grad().values()[0] == doctest::Approx(2.0));
}

TEST_CASE("backward through composed graphs equals the analytic chain") {
  // f(x) = sum(tanh(x W) * x W): hand-chained vs tape on three compositions
  Rng rng(11);

  // 1. y = sigmoid(a * b), dy/da = sigmoid' * b
  Tensor a = Tensor::from_values({1, 1}, {0.7}).set_requires_grad(true);
  Tensor b = Tensor::from_values({1, 1}, {-1.3}).set_requires_grad(true);
  Tape t1;
  Tensor y1 = reshape(sigmoid(mul(a, b, &t1), &t1), {1}, &t1);
  t1.backward(y1);
  const double s = 1.0 / (1.0 + std::exp(0.7 * 1.3));
  CHECK(a.grad().values()[0] == doctest::Approx(s * (1 - s) * -1.3).epsilon(1e-10));
  CHECK(b.grad().values()[0] == doctest::Approx(s * (1 - s) * 0.7).epsilon(1e-10));

  // 2. z = relu(w)^2 summed, dz/dw = 2 relu(w) * [w > 0]
  Tensor w = Tensor::from_values({1, 3}, {2.0, -1.0, 0.5}).set_requires_grad(true);
  Tape t2;
  Tensor r = relu(w, &t2);
  Tensor z = reduce_sum(mul(r, r, &t2), 1, &t2);
  t2.backward(z);
  CHECK(w.grad().values()[0] == doctest::Approx(4.0));
  CHECK(w.grad().values()[1] == doctest::Approx(0.0));
  CHECK(w.grad().values()[2] == doctest::Approx(1.0));

  // 3. tanh(c + c) : dc = 2 (1 - tanh(2c)^2)
  Tensor c = Tensor::from_values({1, 1}, {0.3}).set_requires_grad(true);
  Tape t3;
  Tensor th = tanh(add(c, c, &t3), &t3);
  t3.backward(reshape(th, {1}, &t3));
  const double tv = std::tanh(0.6);
  CHECK(c.grad().values()[0] == doctest::Approx(2 * (1 - tv * tv)).epsilon(1e-10));
}

TEST_CASE("sgd and adam updates") {
  SUBCASE("sgd applies lr * grad") {
    Tensor x = Tensor::from_values({1}, {1.0}).set_requires_grad(true);
    ensure_grad(x.impl())[0] = 6.0;
    std::vector<Parameter> params{{"x", x}};
    Sgd opt(0.1);
    opt.step(params);
    CHECK(x.values()[0] == doctest::Approx(0.4).epsilon(1e-12));
  }

  SUBCASE("adam first step has bias-corrected magnitude close to lr") {
    Tensor x = Tensor::from_values({2}, {1.0, -2.0}).set_requires_grad(true);
    auto g = ensure_grad(x.impl());
    g[0] = 0.3;
    g[1] = -4.0;
    std::vector<Parameter> params{{"x", x}};
    Adam opt(1e-3);
    opt.step(params);
    // first-step update is lr * g / (|g| + eps) = lr * sign(g), bias corrected
    CHECK(std::abs(1.0 - x.values()[0] - 1e-3) <= 1e-6);
    CHECK(std::abs(-2.0 + 1e-3 - x.values()[1]) <= 1e-6);
  }

  SUBCASE("missing gradient is an error") {
    Tensor x = Tensor::from_values({1}, {1.0}).set_requires_grad(true);
    std::vector<Parameter> params{{"x", x}};
    Sgd opt(0.1);
    CHECK_THROWS_WITH_AS(opt.step(params), doctest::Contains("x"), std::runtime_error);
  }

  SUBCASE("sgd on a convex quadratic never increases the loss") {
    Rng rng(5);
    Tensor x = Tensor::uniform({1, 4}, -2, 2, rng).set_requires_grad(true);
    std::vector<Parameter> params{{"x", x}};
    Sgd opt(0.05);
    double prev = 1e300;
    for (int step = 0; step < 200; ++step) {
      Tape tape;
      Tensor loss = reduce_sum(mul(x, x, &tape), 1, &tape);
      CHECK(loss.scalar_value() <= prev + 1e-12);
      prev = loss.scalar_value();
      zero_grads(params);
      tape.backward(loss);
      opt.step(params);
    }
    CHECK(prev < 1e-3);
  }
}

TEST_CASE("every op passes the finite-difference property suite") {
  auto t0 = std::chrono::steady_clock::now();
  auto results = gradcheck_ops(/*reps=*/20, /*seed=*/20240817);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  MESSAGE("op gradcheck: ", results.size(), " ops in ", ms, " ms");
  CHECK(results.size() >= 20);
  for (const auto& r : results) {
    CHECK_MESSAGE(r.ok(1e-4), r.name, " max rel err ", r.max_rel_err);
  }
}

TEST_CASE("aggregation and activation spot checks") {
  // mean of {[2,0],[0,2]} = [1,1]
  Tensor msgs = Tensor::from_values({2, 2}, {2, 0, 0, 2});
  Tensor mean = reduce_mean(msgs, 0, nullptr);
  CHECK(mean.values()[0] == doctest::Approx(1.0));
  CHECK(mean.values()[1] == doctest::Approx(1.0));

  // reduce_max ties go to the first maximal element
  Tensor tie = Tensor::from_values({2, 2}, {3, 1, 3, 2}).set_requires_grad(true);
  Tape tape;
  Tensor mx = reduce_max(tie, 0, &tape);
  Tensor loss = reduce_sum(reshape(mx, {1, 2}, &tape), 1, &tape);
  tape.backward(loss);
  CHECK(tie.grad().values()[0] == 1.0);  // first row wins the tie in column 0
  CHECK(tie.grad().values()[2] == 0.0);
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
  namespace fs = std::filesystem;
  Rng rng(9);
  std::vector<Parameter> params;
  params.push_back({"w1", Tensor::uniform({3, 4}, -1, 1, rng).set_requires_grad(true)});
  params.push_back({"b", Tensor::uniform({4}, -1, 1, rng).set_requires_grad(true)});

  fs::path file = fs::temp_directory_path() / "relchain_ckpt_test.bin";
  save_checkpoint(file, params, "meta v1");
  Checkpoint ckpt = load_checkpoint(file);
  CHECK(ckpt.meta == "meta v1");
  REQUIRE(ckpt.params.size() == 2);
  for (size_t p = 0; p < params.size(); ++p) {
    CHECK(ckpt.params[p].name == params[p].name);
    CHECK(ckpt.params[p].value.shape() == params[p].value.shape());
    for (int64_t i = 0; i < params[p].value.size(); ++i)
      CHECK(ckpt.params[p].value.values()[static_cast<size_t>(i)] ==
            params[p].value.values()[static_cast<size_t>(i)]);
  }

  std::vector<Parameter> fresh;
  fresh.push_back({"w1", Tensor({3, 4})});
  fresh.push_back({"b", Tensor({4})});
  apply_checkpoint(ckpt, fresh);
  for (int64_t i = 0; i < 12; ++i)
    CHECK(fresh[0].value.values()[static_cast<size_t>(i)] ==
          params[0].value.values()[static_cast<size_t>(i)]);

  std::vector<Parameter> wrong;
  wrong.push_back({"w1", Tensor({3, 5})});
  wrong.push_back({"b", Tensor({4})});
  CHECK_THROWS_WITH_AS(apply_checkpoint(ckpt, wrong), doctest::Contains("w1"),
                       std::runtime_error);
  fs::remove(file);
}
