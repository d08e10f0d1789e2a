#include <cstring>

#include "ctxot/rng.hpp"
#include "ctxot/tensor.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"

using namespace ctxot;
using testing::gradcheck;
using testing::random_tensor;
using testing::random_tensor_away_from;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("scalar kernel scales a constant input") {
    Tensor input(Shape{1, 1, 3, 3}, 1.0);
    Tensor kernel(Shape{1, 1, 1, 1}, std::vector<double>{2.0});
    Tensor out = conv2d(input, kernel, 1, 0);
    REQUIRE(out.shape() == Shape{1, 1, 3, 3});
    for (size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 2.0);
}

TEST_CASE("conv2d output extents follow the stride arithmetic") {
    Tensor input(Shape{1, 1, 4, 4}, 1.0);
    Tensor kernel(Shape{1, 1, 2, 2}, 0.25);
    Tensor out = conv2d(input, kernel, 2, 0);
    CHECK(out.shape() == Shape{1, 1, 2, 2});
}

TEST_CASE("conv2d rejects mismatched channels with the axis named") {
    Tensor input(Shape{1, 2, 4, 4}, 1.0);
    Tensor kernel(Shape{1, 3, 2, 2}, 1.0);
    CHECK_THROWS_AS(conv2d(input, kernel, 1, 0), DimensionError);
    try {
        conv2d(input, kernel, 1, 0);
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("axis 1") != std::string::npos);
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(42);
    Tensor input = random_tensor({1, 2, 5, 5}, rng);
    Tensor kernel = random_tensor({3, 2, 3, 3}, rng);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) { return sum(conv2d(in[0], in[1], 1, 1)); },
        {input, kernel});
    CHECK(report.max_rel_err < 1e-4);
    CHECK(report.max_abs_err < 1e-7);
}

TEST_CASE("strided padded conv2d gradients match finite differences") {
    Rng rng(43);
    Tensor input = random_tensor({2, 2, 6, 6}, rng);
    Tensor kernel = random_tensor({3, 2, 3, 3}, rng);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) {
            return sum(square(conv2d(in[0], in[1], 2, 1)));
        },
        {input, kernel});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("elementwise definitions") {
    Tensor x = Tensor::scalar(-1.0);
    CHECK(leaky_relu(x, 0.2).value() == doctest::Approx(-0.2));
    CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
    CHECK(ctxot::exp(Tensor::scalar(0.0)).value() == 1.0);
    CHECK(square(Tensor::scalar(3.0)).value() == 9.0);
    CHECK(recip(Tensor::scalar(4.0)).value() == 0.25);
}

TEST_CASE("elementwise ops reject incompatible shapes") {
    Tensor a(Shape{2, 3}, 1.0);
    Tensor b(Shape{3, 2}, 1.0);
    CHECK_THROWS_AS(add(a, b), DimensionError);
    CHECK_THROWS_AS(mul(a, b), DimensionError);
}

TEST_CASE("scalar broadcast works on both sides") {
    Tensor a(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor s = Tensor::scalar(10.0);
    Tensor left = mul(s, a);
    Tensor right = mul(a, s);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(left.at(i) == 10.0 * a.at(i));
        CHECK(right.at(i) == 10.0 * a.at(i));
    }
}

TEST_CASE("composed exp of square matches finite differences") {
    Rng rng(7);
    Tensor x = random_tensor({3}, rng, -1.2, 1.2);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) { return sum(ctxot::exp(square(in[0]))); },
        {x});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("every unary op passes a finite-difference check") {
    Rng rng(11);
    struct Case {
        const char* name;
        std::function<Tensor(const Tensor&)> apply;
        bool positive_domain;
        bool away_from_zero;
    };
    std::vector<Case> cases = {
        {"leaky_relu", [](const Tensor& t) { return leaky_relu(t, 0.2); }, false, true},
        {"sigmoid", [](const Tensor& t) { return sigmoid(t); }, false, false},
        {"tanh", [](const Tensor& t) { return ctxot::tanh(t); }, false, false},
        {"exp", [](const Tensor& t) { return ctxot::exp(t); }, false, false},
        {"square", [](const Tensor& t) { return square(t); }, false, false},
        {"sqrt_eps", [](const Tensor& t) { return sqrt_eps(t, 1e-6); }, true, false},
        {"recip", [](const Tensor& t) { return recip(t); }, true, true},
        {"clamp_nonneg", [](const Tensor& t) { return clamp_nonneg(t); }, false, true},
        {"scale", [](const Tensor& t) { return scale(t, -1.7); }, false, false},
        {"add_scalar", [](const Tensor& t) { return add_scalar(t, 0.3); }, false, false},
        {"div_scalar", [](const Tensor& t) { return div_scalar(t, 2.5); }, false, false},
    };
    for (const Case& c : cases) {
        CAPTURE(c.name);
        double lo = c.positive_domain ? 0.3 : -2.0;
        Tensor x = c.away_from_zero ? random_tensor_away_from({2, 3}, rng, 0.05, lo, 2.0)
                                    : random_tensor({2, 3}, rng, lo, 2.0);
        auto report = gradcheck(
            [&](Tape&, const std::vector<Tensor>& in) { return sum(c.apply(in[0])); }, {x});
        CHECK(report.max_rel_err < 1e-4);
        CHECK(report.max_abs_err < 1e-7);
    }
}

TEST_CASE("binary ops pass finite-difference checks") {
    Rng rng(12);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);
    Tensor s = random_tensor({1}, rng);
    auto combined = [](Tape&, const std::vector<Tensor>& in) {
        Tensor t = add(in[0], in[1]);
        t = mul(t, sub(in[0], in[1]));
        t = add(t, mul(in[2], in[0]));  // scalar broadcast path
        return sum(t);
    };
    auto report = gradcheck(combined, {a, b, s});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("row-wise minimum with ties resolved to the lowest index") {
    Tensor m(Shape{2, 2}, std::vector<double>{2, 1, 1, 2});
    Tensor r = min_axis(m, 1);
    CHECK(r.shape() == Shape{2});
    CHECK(r.at(0) == 1.0);
    CHECK(r.at(1) == 1.0);
}

TEST_CASE("mean of a small vector") {
    Tensor v(Shape{4}, std::vector<double>{1, 2, 3, 4});
    CHECK(mean(v).value() == 2.5);
}

TEST_CASE("min gradient flows only to the lowest-index minimum") {
    Tape tape;
    Tensor x = tape.leaf(Shape{3}, {3.0, 1.0, 1.0});
    Tensor loss = sum(min_axis(x, 0));
    std::vector<Tensor> g = tape.gradients(loss, {x});
    CHECK(g[0].at(0) == 0.0);
    CHECK(g[0].at(1) == 1.0);
    CHECK(g[0].at(2) == 0.0);
}

TEST_CASE("reductions reject an out-of-range axis") {
    Tensor m(Shape{2, 2}, 1.0);
    CHECK_THROWS_AS(sum_axis(m, 2), DimensionError);
    CHECK_THROWS_AS(min_axis(m, 5), DimensionError);
}

TEST_CASE("reduction gradients match finite differences") {
    Rng rng(13);
    Tensor x = random_tensor_away_from({3, 4}, rng, 0.02);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) {
            Tensor t = add(sum_axis(in[0], 0), min_axis(in[0], 0));
            return add(sum(t), mean(in[0]));
        },
        {x});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("upsample_nearest replicates blocks") {
    Tensor x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor up = upsample_nearest(x, 2);
    REQUIRE(up.shape() == Shape{1, 1, 4, 4});
    std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (size_t i = 0; i < want.size(); ++i) CHECK(up.at(i) == want[i]);

    Tensor same = upsample_nearest(x, 1);
    for (size_t i = 0; i < 4; ++i) CHECK(same.at(i) == x.at(i));

    CHECK_THROWS_AS(upsample_nearest(x, 0), ArgumentError);
}

TEST_CASE("upsample gradients match finite differences") {
    Rng rng(14);
    Tensor x = random_tensor({1, 1, 2, 2}, rng);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) {
            return sum(square(upsample_nearest(in[0], 2)));
        },
        {x});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("channel concat stacks extents") {
    Tensor a(Shape{2, 2, 3, 3}, 1.0);
    Tensor b(Shape{2, 3, 3, 3}, 2.0);
    Tensor c = concat_channels(a, b);
    CHECK(c.shape() == Shape{2, 5, 3, 3});
    CHECK(c.at(0) == 1.0);
    CHECK(c.at(2 * 9 + 1) == 2.0);  // first element of b's block in batch 0
}

TEST_CASE("global average pool of a constant map is that constant") {
    Tensor x(Shape{2, 3, 4, 4}, 0.5);
    Tensor p = global_average_pool(x);
    REQUIRE(p.shape() == Shape{2, 3});
    for (size_t i = 0; i < p.numel(); ++i) CHECK(p.at(i) == 0.5);
}

TEST_CASE("matvec gradients match finite differences") {
    Rng rng(15);
    Tensor m = random_tensor({4, 3}, rng);
    Tensor v = random_tensor({3}, rng);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) { return sum(square(matvec(in[0], in[1]))); },
        {m, v});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("spatial and linear composite gradients match finite differences") {
    Rng rng(16);
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    Tensor y = random_tensor({2, 3, 4, 4}, rng);
    Tensor w = random_tensor({2, 5}, rng);
    Tensor bias = random_tensor({5}, rng);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) {
            Tensor cat = concat_channels(in[0], in[1]);          // [2,5,4,4]
            Tensor pooled = global_average_pool(cat);            // [2,5]
            Tensor biased = add_rowvec(mul(pooled, in[2]), in[3]);
            Tensor back = broadcast_hw(sigmoid(biased), 4, 4);   // [2,5,4,4]
            Tensor gated = mul(cat, back);
            Tensor ds = downsample_sum(gated, 2);
            return sum(square(slice_axis(ds, 1, 1, 4)));
        },
        {x, y, w, bias});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("matmul transpose and reshape gradients match finite differences") {
    Rng rng(17);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto report = gradcheck(
        [](Tape&, const std::vector<Tensor>& in) {
            Tensor p = matmul(in[0], in[1]);              // [3,2]
            Tensor t = transpose2d(p);                    // [2,3]
            return sum(square(reshape(t, Shape{6})));
        },
        {a, b});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("backward of a summed loss equals the sum of separate backwards") {
    Rng rng(18);
    Tensor xv = random_tensor({3, 3}, rng);

    Tape t1;
    Tensor x1 = t1.leaf(xv);
    Tensor l1 = sum(square(x1));
    Tensor l2 = sum(sigmoid(x1));
    std::vector<Tensor> joint = t1.gradients(add(l1, l2), {x1});

    Tape t2;
    Tensor x2 = t2.leaf(xv);
    std::vector<Tensor> g1 = t2.gradients(sum(square(x2)), {x2});
    Tape t3;
    Tensor x3 = t3.leaf(xv);
    std::vector<Tensor> g2 = t3.gradients(sum(sigmoid(x3)), {x3});

    for (size_t i = 0; i < xv.numel(); ++i) {
        CHECK(joint[0].at(i) == doctest::Approx(g1[0].at(i) + g2[0].at(i)).epsilon(1e-12));
    }
}

TEST_CASE("forward evaluation is bit-deterministic") {
    Rng rng(19);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    Tensor a = sigmoid(conv2d(x, k, 2, 1));
    Tensor b = sigmoid(conv2d(x, k, 2, 1));
    CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0);
}

TEST_CASE("second-order gradients flow through the backward graph") {
    // y = sum(x^2): dy/dx = 2x, sum(square(dy/dx)) = 4*sum(x^2),
    // so its gradient w.r.t. x is 8x.
    Tape tape;
    Tensor x = tape.leaf(Shape{3}, {1.0, -2.0, 0.5});
    Tensor y = sum(square(x));
    std::vector<Tensor> first = tape.gradients(y, {x}, /*create_graph=*/true);
    Tensor z = sum(square(first[0]));
    std::vector<Tensor> second = tape.gradients(z, {x});
    for (size_t i = 0; i < 3; ++i) {
        CHECK(second[0].at(i) == doctest::Approx(8.0 * x.at(i)).epsilon(1e-12));
    }
}

TEST_CASE("detached tensors never receive gradient") {
    Tape tape;
    Tensor x = tape.leaf(Shape{2}, {1.0, 2.0});
    Tensor c = Tensor(Shape{2}, std::vector<double>{3.0, 4.0});
    Tensor loss = sum(mul(x, c));
    std::vector<Tensor> g = tape.gradients(loss, {x});
    CHECK(g[0].at(0) == 3.0);
    CHECK(g[0].at(1) == 4.0);
    CHECK_FALSE(c.on_tape());
}

TEST_CASE("mixing tensors from two live tapes is rejected") {
    Tape t1, t2;
    Tensor a = t1.leaf(Shape{2}, {1.0, 2.0});
    Tensor b = t2.leaf(Shape{2}, {3.0, 4.0});
    CHECK_THROWS_AS(add(a, b), ArgumentError);
}

TEST_SUITE_END();
