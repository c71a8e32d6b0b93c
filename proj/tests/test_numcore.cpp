#include <cmath>

#include "doctest.h"
#include "graphonomy/convolution.hpp"
#include "graphonomy/optim.hpp"
#include "graphonomy/rng.hpp"
#include "graphonomy/tensor.hpp"
#include "test_support.hpp"

using namespace graphonomy;
using num::Tensor;

TEST_CASE("tensor shape and data invariants") {
    CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor<double>::zeros({0, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor<double>::zeros({}), DimensionError);
    auto t = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.all_finite());
    t.mutable_values()[2] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(t.ensure_finite("test"), NumericError);
}

TEST_CASE("matmul identity") {
    auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
    auto b = Tensor<double>::from({2, 3}, {5, -1, 2, 0.5, 3, 7});
    auto c = num::matmul(eye, b);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(c.values()[static_cast<std::size_t>(i)] ==
                                               b.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("matmul hand-computed 2x2 oracle") {
    auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    auto b = Tensor<double>::from({2, 1}, {0, 1});
    auto c = num::matmul(a, b);
    CHECK(c.at(0, 0) == 2.0);
    CHECK(c.at(1, 0) == 4.0);
}

TEST_CASE("matmul shape error names both shapes") {
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({2, 3});
    try {
        num::matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("vs") != std::string::npos);
    }
}

TEST_CASE("matmul against a naive reference") {
    rng::Stream s(5, "test/matmulref");
    auto a = test::random_tensor({5, 7}, s);
    auto b = test::random_tensor({7, 4}, s);
    auto c = num::matmul(a, b);
    auto expected = test::naive_matmul(a.values(), b.values(), 5, 7, 4);
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(c.values()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("matmul gradient matches central finite differences") {
    num::ParameterStore<double> store;
    rng::Stream s(7, "test/matmul");
    auto& a = store.add("a", test::random_tensor({3, 4}, s));
    auto& b = store.add("b", test::random_tensor({4, 2}, s));
    auto f = [&]() { return num::sum(num::matmul(a, b)); };
    auto report = num::grad_check<double>(f, store);
    CHECK(report.pass);
    CHECK(report.max_rel_error() <= 1e-6);
}

TEST_CASE("softmax examples") {
    auto sym = num::softmax(Tensor<double>::from({3}, {0, 0, 0}), 0);
    for (double v : sym.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    auto big = num::softmax(Tensor<double>::from({2}, {1000, 1000}), 0);
    CHECK(big.values()[0] == doctest::Approx(0.5));
    CHECK(big.all_finite());

    auto ln3 = num::softmax(Tensor<double>::from({2}, {0.0, std::log(3.0)}), 0);
    CHECK(ln3.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(ln3.values()[1] == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(num::softmax(Tensor<double>::zeros({2, 2}), 2), DimensionError);
    CHECK_THROWS_AS(num::softmax(Tensor<double>::zeros({2, 2}), -1), DimensionError);
}

TEST_CASE("softmax rows sum to one and shift invariance") {
    rng::Stream s(11, "test/softmax");
    auto x = test::random_tensor({5, 7}, s);
    auto y = num::softmax(x, 1);
    for (std::int64_t r = 0; r < 5; ++r) {
        double total = 0;
        for (std::int64_t c = 0; c < 7; ++c) {
            total += y.at(r, c);
            CHECK(y.at(r, c) >= 0.0);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
    std::vector<double> data = x.values();
    for (auto& v : data) v += 3.25;
    auto y2 = num::softmax(Tensor<double>::from({5, 7}, std::move(data)), 1);
    for (std::size_t i = 0; i < y.values().size(); ++i)
        CHECK(y.values()[i] == doctest::Approx(y2.values()[i]).epsilon(1e-6));
}

TEST_CASE("softmax gradient") {
    num::ParameterStore<double> store;
    rng::Stream s(13, "test/softmaxgrad");
    auto& x = store.add("x", test::random_tensor({4, 5}, s));
    auto w = test::random_tensor({4, 5}, s);
    auto f = [&]() { return num::sum(num::mul(num::softmax(x, 1), w)); };
    CHECK(num::grad_check<double>(f, store).pass);
}

TEST_CASE("relu examples") {
    auto y = num::relu(Tensor<double>::from({3}, {-1, 0, 2}));
    CHECK(y.values() == std::vector<double>{0, 0, 2});
    auto z = num::relu(Tensor<double>::from({3}, {-5, -1, -0.25}));
    for (double v : z.values()) CHECK(v == 0.0);
    // Subgradient at 0 is 0.
    auto x = Tensor<double>::from({1}, {0.0}).set_requires_grad(true);
    auto out = num::relu(x);
    num::backward(out);
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("cross_entropy uniform logits gives ln K") {
    auto logits = Tensor<double>::zeros({3, 4});
    auto loss = num::cross_entropy(logits, {0, 1, 2});
    CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy large true-class margin drives loss to zero") {
    double prev = 1e9;
    for (double margin : {2.0, 8.0, 32.0}) {
        auto logits = Tensor<double>::from({1, 3}, {margin, 0, 0});
        const double l = num::cross_entropy(logits, {0}).item();
        CHECK(l < prev);
        prev = l;
    }
    CHECK(prev < 1e-10);
}

TEST_CASE("cross_entropy random case matches log-sum-exp oracle") {
    rng::Stream s(17, "test/ce");
    auto logits = test::random_tensor({3, 5}, s);
    const std::vector<std::int64_t> labels{2, 0, 4};
    const double loss = num::cross_entropy(logits, labels).item();
    double expected = 0;
    for (int r = 0; r < 3; ++r) {
        double lse = 0;
        for (int c = 0; c < 5; ++c) lse += std::exp(logits.at(r, c));
        expected += std::log(lse) - logits.at(r, labels[static_cast<std::size_t>(r)]);
    }
    expected /= 3;
    CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cross_entropy ignore_index with zero scored pixels") {
    auto logits = Tensor<double>::from({2, 2}, {5, -3, 1, 1}).set_requires_grad(true);
    auto loss = num::cross_entropy(logits, {255, 255}, 255);
    CHECK(loss.item() == 0.0);
    num::backward(loss);
    for (double g : logits.grad()) CHECK(g == 0.0);
}

TEST_CASE("cross_entropy out-of-range label names the pixel") {
    auto logits = Tensor<double>::zeros({3, 2});
    try {
        num::cross_entropy(logits, {0, 5, 1});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("pixel 1") != std::string::npos);
    }
}

TEST_CASE("cross_entropy gradient") {
    num::ParameterStore<double> store;
    rng::Stream s(19, "test/cegrad");
    auto& logits = store.add("logits", test::random_tensor({6, 4}, s));
    auto f = [&]() { return num::cross_entropy(logits, {0, 3, 1, 2, 2, 0}); };
    CHECK(num::grad_check<double>(f, store).pass);
}

TEST_CASE("backward fills parameter gradients") {
    auto w = Tensor<double>::from({2, 2}, {1, -2, 3, 4}).set_requires_grad(true);
    num::backward(num::sum(w));
    for (double g : w.grad()) CHECK(g == 1.0);

    w.zero_grad();
    num::backward(num::scale(num::sum(num::mul(w, w)), 0.5));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(w.grad()[i] == doctest::Approx(w.values()[i]).epsilon(1e-15));
}

TEST_CASE("backward accumulates until zeroed") {
    auto w = Tensor<double>::from({2}, {1, 2}).set_requires_grad(true);
    num::backward(num::sum(w));
    num::backward(num::sum(w));
    for (double g : w.grad()) CHECK(g == 2.0);
    w.zero_grad();
    num::backward(num::sum(w));
    for (double g : w.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward rejects non-scalar") {
    auto w = Tensor<double>::from({2}, {1, 2}).set_requires_grad(true);
    CHECK_THROWS_AS(num::backward(num::relu(w)), UsageError);
}

TEST_CASE("sgd step examples") {
    num::ParameterStore<double> store;
    auto& v = store.add("w", Tensor<double>::from({2}, {1.0, 2.0}));

    SUBCASE("plain gradient descent") {
        v.grad_buffer() = {0.5, -0.25};
        num::sgd_step(store, 1.0, 0.0, 0.0);
        CHECK(v.values()[0] == 0.5);
        CHECK(v.values()[1] == 2.25);
    }
    SUBCASE("momentum unrolled two steps") {
        v.grad_buffer() = {1.0, 1.0};
        num::sgd_step(store, 1.0, 0.9, 0.0);
        v.zero_grad();
        v.grad_buffer() = {1.0, 1.0};
        num::sgd_step(store, 1.0, 0.9, 0.0);
        // decrements: g, then 0.9 g + g = 1.9 g; total 2.9 g
        CHECK(v.values()[0] == doctest::Approx(1.0 - 2.9).epsilon(1e-15));
    }
    SUBCASE("weight decay decouples from zero gradient") {
        v.grad_buffer() = {0.0, 0.0};
        num::sgd_step(store, 0.1, 0.0, 5e-4);
        CHECK(v.values()[0] == doctest::Approx(1.0 * (1 - 0.1 * 5e-4)).epsilon(1e-15));
        CHECK(v.values()[1] == doctest::Approx(2.0 * (1 - 0.1 * 5e-4)).epsilon(1e-15));
    }
    SUBCASE("non-positive learning rate is rejected") {
        v.grad_buffer() = {1.0, 1.0};
        CHECK_THROWS_AS(num::sgd_step(store, 0.0, 0.9, 0.0), ConfigError);
        CHECK_THROWS_AS(num::sgd_step(store, -0.1, 0.9, 0.0), ConfigError);
    }
}

TEST_CASE("sgd with zero momentum equals the textbook update bitwise") {
    num::ParameterStore<double> store;
    rng::Stream s(23, "test/sgd");
    auto& v = store.add("w", test::random_tensor({4, 4}, s));
    std::vector<double> expected = v.values();
    std::vector<double> grad(16);
    for (auto& g : grad) g = s.uniform(-1, 1);
    v.grad_buffer() = grad;
    const double lr = 0.05, wd = 5e-4;
    for (std::size_t i = 0; i < expected.size(); ++i)
        expected[i] -= lr * (grad[i] + wd * expected[i]);
    num::sgd_step(store, lr, 0.0, wd);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(v.values()[i] == expected[i]);
}

TEST_CASE("duplicate parameter names are rejected") {
    num::ParameterStore<double> store;
    store.add("w", Tensor<double>::zeros({2}));
    CHECK_THROWS_AS(store.add("w", Tensor<double>::zeros({2})), ConfigError);
}

TEST_CASE("grad_check on a linear function is near machine epsilon") {
    num::ParameterStore<double> store;
    auto& w = store.add("w", Tensor<double>::from({3}, {0.5, -1.5, 2.0}));
    auto c = Tensor<double>::from({3}, {2.0, 3.0, -1.0});
    auto f = [&]() { return num::sum(num::mul(w, c)); };
    auto report = num::grad_check<double>(f, store);
    CHECK(report.pass);
    CHECK(report.max_rel_error() < 1e-9);
}

TEST_CASE("grad_check flags a corrupted gradient") {
    num::ParameterStore<double> store;
    auto& w = store.add("w", Tensor<double>::from({2}, {1.0, 2.0}));
    // A wrong analytic gradient must fail the comparison: check manually with
    // a corrupted grad buffer against the same finite differences grad_check
    // uses.
    auto f = [&]() { return num::scale(num::sum(num::mul(w, w)), 0.5); };
    auto clean = num::grad_check<double>(f, store);
    CHECK(clean.pass);

    store.zero_grad();
    num::backward(f());
    w.grad_buffer()[0] += 0.5; // deliberate corruption
    const double corrupted = w.grad()[0];
    const double eps = 1e-5;
    auto& vals = w.mutable_values();
    const double saved = vals[0];
    vals[0] = saved + eps;
    const double fp = f().item();
    vals[0] = saved - eps;
    const double fm = f().item();
    vals[0] = saved;
    const double numeric = (fp - fm) / (2 * eps);
    const double rel = std::abs(corrupted - numeric) / std::max({1.0, std::abs(corrupted), std::abs(numeric)});
    CHECK(rel > 1e-6); // the report would carry pass=false for this entry
}

TEST_CASE("composed primitives match finite differences over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        num::ParameterStore<double> store;
        rng::Stream s(seed, "test/compose");
        auto& a = store.add("a", test::random_tensor({4, 3}, s));
        auto& b = store.add("b", test::random_tensor({3, 5}, s));
        auto& c = store.add("c", test::random_tensor({4, 5}, s));
        auto f = [&]() {
            auto y = num::relu(num::matmul(a, b));
            auto z = num::softmax(num::add(y, c), 1);
            return num::sum(num::mul(z, c));
        };
        auto report = num::grad_check<double>(f, store);
        CHECK_MESSAGE(report.pass, "seed ", seed, " max rel ", report.max_rel_error());
    }
}

TEST_CASE("operations are deterministic given identical inputs") {
    rng::Stream s(31, "test/det");
    auto a = test::random_tensor({6, 6}, s);
    auto b = test::random_tensor({6, 6}, s);
    auto c1 = num::matmul(a, b);
    auto c2 = num::matmul(a, b);
    for (std::size_t i = 0; i < c1.values().size(); ++i) CHECK(c1.values()[i] == c2.values()[i]);
    auto s1 = num::softmax(a, 1);
    auto s2 = num::softmax(a, 1);
    for (std::size_t i = 0; i < s1.values().size(); ++i) CHECK(s1.values()[i] == s2.values()[i]);
}

TEST_CASE("conv2d shapes and zero weights") {
    auto x = Tensor<double>::full({16, 3}, 1.0); // 4x4 RGB
    auto k = Tensor<double>::zeros({27, 8});
    auto bias = Tensor<double>::zeros({8});
    auto y = num::conv2d(x, std::int64_t{1}, 4, 4, k, 3, 3, bias, 1, 1);
    CHECK(y.shape() == num::Shape{16, 8});
    for (double v : y.values()) CHECK(v == 0.0);
    auto y2 = num::conv2d(x, std::int64_t{1}, 4, 4, k, 3, 3, bias, 2, 1);
    CHECK(y2.shape() == num::Shape{4, 8});
}

TEST_CASE("conv2d matches a direct dense evaluation") {
    rng::Stream s(37, "test/conv");
    const int h = 5, w = 4, cin = 3, cout = 2;
    auto x = test::random_tensor({h * w, cin}, s);
    auto k = test::random_tensor({9 * cin, cout}, s);
    auto bias = test::random_tensor({cout}, s);
    auto y = num::conv2d(x, std::int64_t{1}, h, w, k, 3, 3, bias, 1, 1);
    for (int oy = 0; oy < h; ++oy) {
        for (int ox = 0; ox < w; ++ox) {
            for (int oc = 0; oc < cout; ++oc) {
                double acc = bias.values()[static_cast<std::size_t>(oc)];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int iy = oy - 1 + ky, ix = ox - 1 + kx;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        for (int ic = 0; ic < cin; ++ic)
                            acc += x.at(iy * w + ix, ic) * k.at((ky * 3 + kx) * cin + ic, oc);
                    }
                CHECK(y.at(oy * w + ox, oc) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("conv2d gradient over 5 seeds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        num::ParameterStore<double> store;
        rng::Stream s(seed, "test/convgrad");
        auto& x = store.add("x", test::random_tensor({12, 2}, s)); // 3x4
        auto& k = store.add("k", test::random_tensor({18, 3}, s));
        auto& bias = store.add("bias", test::random_tensor({3}, s));
        auto wsum = test::random_tensor({12, 3}, s);
        auto f = [&]() {
            return num::sum(num::mul(num::conv2d(x, std::int64_t{1}, 3, 4, k, 3, 3, bias, 1, 1), wsum));
        };
        CHECK(num::grad_check<double>(f, store).pass);
    }
}

TEST_CASE("upsample identity and constants") {
    rng::Stream s(41, "test/up");
    auto x = test::random_tensor({12, 2}, s); // 3x4
    auto same = num::upsample_bilinear(x, std::int64_t{1}, 3, 4, 3, 4);
    for (std::size_t i = 0; i < x.values().size(); ++i) CHECK(same.values()[i] == x.values()[i]);

    auto c = Tensor<double>::full({12, 1}, 0.75);
    auto up = num::upsample_bilinear(c, std::int64_t{1}, 3, 4, 9, 16);
    for (double v : up.values()) CHECK(v == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(num::upsample_bilinear(x, std::int64_t{1}, 3, 4, 2, 4), UsageError);
}

TEST_CASE("upsample 2x2 to 4x4 matches the closed-form bilinear oracle") {
    auto x = Tensor<double>::from({4, 1}, {0, 1, 2, 3}); // [[0,1],[2,3]]
    auto y = num::upsample_bilinear(x, std::int64_t{1}, 2, 2, 4, 4);
    // align_corners=false source positions: (o+0.5)/2-0.5 = -0.25,0.25,0.75,1.25
    const double pos[4] = {0.0, 0.25, 0.75, 1.0}; // clamped
    auto at = [&](int yy, int xx) { return x.values()[static_cast<std::size_t>(yy * 2 + xx)]; };
    for (int oy = 0; oy < 4; ++oy) {
        for (int ox = 0; ox < 4; ++ox) {
            const int y0 = static_cast<int>(pos[oy]), x0 = static_cast<int>(pos[ox]);
            const int y1 = std::min(y0 + 1, 1), x1 = std::min(x0 + 1, 1);
            const double ty = pos[oy] - y0, tx = pos[ox] - x0;
            const double expect = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
                                  ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
            CHECK(y.values()[static_cast<std::size_t>(oy * 4 + ox)] ==
                  doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("upsample gradient") {
    num::ParameterStore<double> store;
    rng::Stream s(43, "test/upgrad");
    auto& x = store.add("x", test::random_tensor({6, 2}, s)); // 2x3
    auto wsum = test::random_tensor({24, 2}, s);
    auto f = [&]() {
        return num::sum(num::mul(num::upsample_bilinear(x, std::int64_t{1}, 2, 3, 4, 6), wsum));
    };
    CHECK(num::grad_check<double>(f, store).pass);
}

TEST_CASE("structure op gradients: slice, concat, transpose, row division") {
    num::ParameterStore<double> store;
    rng::Stream s(47, "test/structure");
    auto& a = store.add("a", test::random_tensor({6, 3}, s));
    auto& m = store.add("m", test::random_tensor({4}, s, 0.5, 2.0));
    auto wsum = test::random_tensor({4, 3}, s);
    auto f = [&]() {
        auto top = num::slice_rows(a, 0, 4);
        auto bottom = num::slice_rows(a, 4, 6);
        auto joined = num::concat_rows<double>({num::transpose(num::transpose(top)), bottom});
        auto pooled = num::div_rows_clamped(num::slice_rows(joined, 0, 4), m, 1e-6);
        return num::sum(num::mul(pooled, wsum));
    };
    CHECK(num::grad_check<double>(f, store).pass);
}

TEST_CASE("colsum and add_rowvec gradients") {
    num::ParameterStore<double> store;
    rng::Stream s(49, "test/cols");
    auto& a = store.add("a", test::random_tensor({5, 3}, s));
    auto& b = store.add("b", test::random_tensor({3}, s));
    auto w = test::random_tensor({3}, s);
    auto f = [&]() { return num::sum(num::mul(num::colsum(num::add_rowvec(a, b)), w)); };
    CHECK(num::grad_check<double>(f, store).pass);
}

TEST_CASE("cosine_rows values, zero-norm convention and gradient") {
    auto a = Tensor<double>::from({2, 2}, {1, 0, 0, 2});
    auto b = Tensor<double>::from({3, 2}, {3, 0, 0, 1, 1, 1});
    auto c = num::cosine_rows(a, b);
    CHECK(c.at(0, 0) == doctest::Approx(1.0));
    CHECK(c.at(0, 1) == doctest::Approx(0.0));
    CHECK(c.at(0, 2) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(c.at(1, 1) == doctest::Approx(1.0));

    auto z = Tensor<double>::from({1, 2}, {0, 0});
    auto cz = num::cosine_rows(z, b);
    for (double v : cz.values()) CHECK(v == 0.0);

    num::ParameterStore<double> store;
    rng::Stream s(53, "test/cos");
    auto& x = store.add("x", test::random_tensor({3, 4}, s));
    auto& y = store.add("y", test::random_tensor({5, 4}, s));
    auto wsum = test::random_tensor({3, 5}, s);
    auto f = [&]() { return num::sum(num::mul(num::cosine_rows(x, y), wsum)); };
    CHECK(num::grad_check<double>(f, store).pass);
}
