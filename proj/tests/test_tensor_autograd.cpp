// Tape mechanics and the SGD update rule, checked against values short
// enough to compute by hand.

#include <stdexcept>

#include "doctest.h"
#include "s2d/ops.hpp"
#include "s2d/optim.hpp"
#include "test_util.hpp"

using namespace s2d;
using test::bitwise_equal;
using test::max_rel_diff;
using test::randn;

TEST_CASE("tensor construction and indexing") {
    Tensor<double> t({2, 3, 4, 5});
    CHECK(t.numel() == 120);
    CHECK(t.shape.str() == "(2,3,4,5)");
    t.at(1, 2, 3, 4) = 7.5;
    CHECK(t.data[119] == 7.5);
    CHECK(t.at(0, 0, 0, 0) == 0.0);

    Tensor<double> s = Tensor<double>::scalar(3.0);
    CHECK(s.shape == Shape4{1, 1, 1, 1});
    CHECK(s.data[0] == 3.0);

    Tensor<double> f = Tensor<double>::full({1, 1, 2, 2}, 2.5);
    for (double v : f.data) CHECK(v == 2.5);

    CHECK_THROWS_AS(Tensor<double>({1, 1, 2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("sum gradient is all ones") {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    Grads<double> g = tape.backward(ops::sum_all(x));
    const Tensor<double>& gx = g.at(x.id);
    CHECK(gx.shape == Shape4{1, 1, 2, 2});
    for (double v : gx.data) CHECK(v == 1.0);
}

TEST_CASE("sum of squares gradient is 2x") {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    Grads<double> g = tape.backward(ops::sum_all(ops::mul(x, x)));
    const Tensor<double>& gx = g.at(x.id);
    CHECK(gx.data == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("backward rejects a non-scalar loss") {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("unreached leaves get zero gradients") {
    Tape<double> tape;
    Var<double> used = tape.leaf(Tensor<double>::scalar(2.0));
    Var<double> unused = tape.leaf(Tensor<double>({1, 1, 3, 3}));
    Grads<double> g = tape.backward(ops::sum_all(used));
    CHECK(g.at(used.id).data[0] == 1.0);
    const Tensor<double>& gz = g.at(unused.id);
    CHECK(gz.shape == Shape4{1, 1, 3, 3});
    for (double v : gz.data) CHECK(v == 0.0);
}

TEST_CASE("constants receive no gradient entry") {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>::scalar(2.0));
    Var<double> c = tape.constant(Tensor<double>::scalar(3.0));
    Grads<double> g = tape.backward(ops::sum_all(ops::mul(x, c)));
    CHECK(g.at(x.id).data[0] == 3.0);
    CHECK_THROWS_AS(g.at(c.id), std::invalid_argument);
}

TEST_CASE("backward is linear over loss sums") {
    Rng rng(31);
    const Tensor<double> xv = randn<double>({1, 2, 3, 3}, rng);

    auto grad_of = [&](int which) {
        Tape<double> tape;
        Var<double> x = tape.leaf(xv);
        Var<double> a = ops::sum_all(ops::mul(x, x));
        Var<double> b = ops::sum_all(ops::relu(x));
        Var<double> loss = which == 0 ? a : which == 1 ? b : ops::add(a, b);
        return tape.backward(loss).at(x.id);
    };

    const Tensor<double> ga = grad_of(0);
    const Tensor<double> gb = grad_of(1);
    const Tensor<double> gsum = grad_of(2);
    Tensor<double> manual(ga.shape);
    for (size_t i = 0; i < manual.data.size(); ++i) manual.data[i] = ga.data[i] + gb.data[i];
    CHECK(max_rel_diff(gsum, manual) < 1e-12);
}

TEST_CASE("gradient accumulates once per use of a shared node") {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>::scalar(3.0));
    // loss = x*x + x: dl/dx = 2x + 1 = 7
    Var<double> loss = ops::add(ops::sum_all(ops::mul(x, x)), ops::sum_all(x));
    CHECK(tape.backward(loss).at(x.id).data[0] == 7.0);
}

TEST_CASE("elementwise op values") {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>({1, 1, 1, 4}, {-2, -0.5, 0, 3}));
    CHECK(ops::relu(x).val().data == std::vector<double>{0, 0, 0, 3});
    CHECK(ops::abs_val(x).val().data == std::vector<double>{2, 0.5, 0, 3});
    CHECK(ops::square(x).val().data == std::vector<double>{4, 0.25, 0, 9});
    CHECK(ops::scale(x, -2.0).val().data == std::vector<double>{4, 1, 0, -6});

    Var<double> y = tape.leaf(Tensor<double>({1, 1, 1, 4}, {1, 1, 1, 1}));
    CHECK(ops::add(x, y).val().data == std::vector<double>{-1, 0.5, 1, 4});
    CHECK(ops::sub(x, y).val().data == std::vector<double>{-3, -1.5, -1, 2});
}

TEST_CASE("berhu_elem value branches") {
    Tape<double> tape;
    Var<double> x = tape.leaf(Tensor<double>({1, 1, 1, 3}, {1.0, 2.0, 10.0}));
    // c = 2: |1| = 1, |2| = 2 (kink, linear branch), (100+4)/4 = 26.
    const Tensor<double>& v = ops::berhu_elem(x, 2.0).val();
    CHECK(v.data[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v.data[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(v.data[2] == doctest::Approx(26.0).epsilon(1e-14));

    // Degenerate threshold falls back to the absolute value.
    const Tensor<double>& w = ops::berhu_elem(x, 0.0).val();
    CHECK(w.data == std::vector<double>{1, 2, 10});
}

TEST_CASE("sgd plain gradient step") {
    Tensor<double> p = Tensor<double>::scalar(1.0);
    std::vector<Tensor<double>*> params{&p};
    std::vector<Tensor<double>> grads{Tensor<double>::scalar(0.5)};
    std::vector<Tensor<double>> vel{Tensor<double>::scalar(0.0)};
    sgd_step(params, grads, vel, 0.1, 0.0, 0.0);
    CHECK(p.data[0] == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("sgd decay-only step") {
    Tensor<double> p = Tensor<double>::scalar(1.0);
    std::vector<Tensor<double>*> params{&p};
    std::vector<Tensor<double>> grads{Tensor<double>::scalar(0.0)};
    std::vector<Tensor<double>> vel{Tensor<double>::scalar(0.0)};
    sgd_step(params, grads, vel, 0.1, 1e-4, 0.0);
    CHECK(p.data[0] == doctest::Approx(0.99999).epsilon(1e-15));
}

TEST_CASE("sgd momentum recurrence over two steps") {
    Tensor<double> p = Tensor<double>::scalar(0.0);
    std::vector<Tensor<double>*> params{&p};
    std::vector<Tensor<double>> grads{Tensor<double>::scalar(1.0)};
    std::vector<Tensor<double>> vel{Tensor<double>::scalar(0.0)};
    sgd_step(params, grads, vel, 0.1, 0.0, 0.9);
    CHECK(p.data[0] == doctest::Approx(-0.1).epsilon(1e-15));
    sgd_step(params, grads, vel, 0.1, 0.0, 0.9);
    CHECK(p.data[0] == doctest::Approx(-0.29).epsilon(1e-15));
}

TEST_CASE("sgd with zero learning rate is the identity") {
    Rng rng(5);
    Tensor<double> p = randn<double>({2, 2, 3, 3}, rng);
    const Tensor<double> before = p;
    std::vector<Tensor<double>*> params{&p};
    std::vector<Tensor<double>> grads{randn<double>({2, 2, 3, 3}, rng)};
    std::vector<Tensor<double>> vel{Tensor<double>({2, 2, 3, 3})};
    sgd_step(params, grads, vel, 0.0, 1e-4, 0.9);
    CHECK(bitwise_equal(p, before));
}

TEST_CASE("sgd rejects mismatched shapes") {
    Tensor<double> p = Tensor<double>::scalar(1.0);
    std::vector<Tensor<double>*> params{&p};
    std::vector<Tensor<double>> grads{Tensor<double>({1, 1, 1, 2})};
    std::vector<Tensor<double>> vel{Tensor<double>::scalar(0.0)};
    CHECK_THROWS_AS(sgd_step(params, grads, vel, 0.1, 0.0, 0.0), std::invalid_argument);
}
