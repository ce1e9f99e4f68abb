#include <doctest.h>

#include <cmath>
#include <limits>

#include "ucm/oracle.hpp"
#include "ucm/ops.hpp"

using namespace ucm;

namespace {

// local triple-loop reference for matmul tests
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 int m, int k, int n) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p)
                c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST_CASE("matmul scalar and identity cases") {
    auto a = Tensor::from_data({1, 1}, {2.0f});
    auto b = Tensor::from_data({1, 1}, {3.0f});
    CHECK(matmul(a, b).value() == doctest::Approx(6.0).epsilon(1e-7));

    auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto m = Tensor::from_data({2, 2}, {3.5f, -1.25f, 0.75f, 9.0f});
    auto out = matmul(eye, m);
    for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == m.data()[i]);
}

TEST_CASE("matmul 2x2 against triple-loop reference") {
    auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    auto c = matmul(a, b);
    const auto expect = naive_matmul({1, 2, 3, 4}, {5, 6, 7, 8}, 2, 2, 2);
    CHECK(c.data()[0] == doctest::Approx(19));
    CHECK(c.data()[1] == doctest::Approx(22));
    CHECK(c.data()[2] == doctest::Approx(43));
    CHECK(c.data()[3] == doctest::Approx(50));
    for (int i = 0; i < 4; ++i) CHECK(c.data()[i] == doctest::Approx(expect[i]));
}

TEST_CASE("matmul rejects mismatched inner dims") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matmul backward matches dC B^T and A^T dC") {
    Rng rng(11);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    backward(sum(matmul(a, b)));
    // dA = 1 * B^T (row sums of B), dB = A^T * 1 (column sums of A)
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
            double expect = 0;
            for (int p = 0; p < 2; ++p) expect += b.data()[j * 2 + p];
            CHECK(a.grad_vec()[i * 4 + j] == doctest::Approx(expect).epsilon(1e-5));
        }
    for (int j = 0; j < 4; ++j) {
        double col = 0;
        for (int i = 0; i < 3; ++i) col += a.data()[i * 4 + j];
        for (int p = 0; p < 2; ++p)
            CHECK(b.grad_vec()[j * 2 + p] == doctest::Approx(col).epsilon(1e-5));
    }
}

TEST_CASE("conv2d 1x1 kernel scales input") {
    auto x = Tensor::filled({1, 1, 3, 3}, 1.0f);
    auto w = Tensor::from_data({1, 1, 1, 1}, {2.0f});
    auto b = Tensor::zeros({1});
    auto y = conv2d(x, w, b);
    for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d dilation=1 equals the standard convolution") {
    Rng rng(3);
    auto x = random_tensor({1, 2, 5, 5}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    auto dilated = conv2d(x, w, b, 1, 1, 1);

    oracle::ShadowTensor sx({1, 2, 5, 5});
    oracle::ShadowTensor sw({3, 2, 3, 3});
    for (int i = 0; i < x.numel(); ++i) sx.data[i] = x.data()[i];
    for (int i = 0; i < w.numel(); ++i) sw.data[i] = w.data()[i];
    std::vector<double> sb(b.data(), b.data() + 3);
    auto ref = oracle::naive_conv2d(sx, sw, sb, 1, 1, 1);
    REQUIRE(ref.numel() == dilated.numel());
    for (int i = 0; i < dilated.numel(); ++i)
        CHECK(std::abs(dilated.data()[i] - ref.data[i]) < 1e-6);
}

TEST_CASE("conv2d dilation 2 on a 5x5 ramp samples the even grid") {
    std::vector<float> ramp(25);
    for (int i = 0; i < 25; ++i) ramp[i] = static_cast<float>(i);
    auto x = Tensor::from_data({1, 1, 5, 5}, ramp);
    auto w = Tensor::filled({1, 1, 3, 3}, 1.0f);
    auto b = Tensor::zeros({1});
    auto y = conv2d(x, w, b, 1, 0, 2);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    double expect = 0;
    for (int r : {0, 2, 4})
        for (int c : {0, 2, 4}) expect += ramp[r * 5 + c];
    CHECK(y.value() == doctest::Approx(expect));
}

TEST_CASE("conv2d rejects non-positive output dims") {
    auto x = Tensor::zeros({1, 1, 2, 2});
    auto w = Tensor::zeros({1, 1, 5, 5});
    auto b = Tensor::zeros({1});
    CHECK_THROWS_AS(conv2d(x, w, b, 1, 0, 1), DimensionError);
}

TEST_CASE("dilated conv equals conv with zero-interleaved kernel") {
    Rng rng(17);
    auto x = random_tensor({1, 2, 9, 9}, rng);
    auto w = random_tensor({2, 2, 3, 3}, rng);
    auto b = random_tensor({2}, rng);
    auto dil = conv2d(x, w, b, 1, 2, 2);
    // expand the 3x3 kernel to 5x5 with interleaved zero rows/columns
    auto wexp = Tensor::zeros({2, 2, 5, 5});
    for (int co = 0; co < 2; ++co)
        for (int ci = 0; ci < 2; ++ci)
            for (int a = 0; a < 3; ++a)
                for (int bb = 0; bb < 3; ++bb)
                    wexp.data()[((co * 2 + ci) * 5 + 2 * a) * 5 + 2 * bb] =
                        w.data()[((co * 2 + ci) * 3 + a) * 3 + bb];
    auto plain = conv2d(x, wexp, b, 1, 2, 1);
    REQUIRE(plain.numel() == dil.numel());
    for (int i = 0; i < dil.numel(); ++i) CHECK(std::abs(plain.data()[i] - dil.data()[i]) < 1e-6f);
}

TEST_CASE("conv_transpose2d basics") {
    auto x = Tensor::from_data({1, 1, 1, 1}, {1.0f});
    auto w = Tensor::filled({1, 1, 2, 2}, 1.0f);
    Tensor nobias;
    auto y = conv_transpose2d(x, w, nobias, 2);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(1.0));

    auto x2 = Tensor::zeros({1, 3, 2, 2});
    auto w2 = Tensor::zeros({3, 5, 2, 2});
    auto y2 = conv_transpose2d(x2, w2, nobias, 2);
    CHECK(y2.shape() == Shape{1, 5, 4, 4});
}

TEST_CASE("conv_transpose2d matches the scatter-add rule") {
    auto x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto w = Tensor::from_data({1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor nobias;
    auto y = conv_transpose2d(x, w, nobias, 2);
    // scatter oracle: out(2i+a, 2j+b) += x(i,j) * w(a,b)
    float expect[4][4] = {};
    const float xv[2][2] = {{1, 2}, {3, 4}};
    const float wv[2][2] = {{1, 0}, {0, 1}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) expect[2 * i + a][2 * j + b] += xv[i][j] * wv[a][b];
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(y.data()[r * 4 + c] == doctest::Approx(expect[r][c]));
}

TEST_CASE("maxpool2d forward cases") {
    auto c = Tensor::filled({1, 1, 4, 4}, 3.25f);
    auto yc = maxpool2d(c);
    for (int i = 0; i < yc.numel(); ++i) CHECK(yc.data()[i] == doctest::Approx(3.25));

    auto x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(maxpool2d(x).value() == doctest::Approx(4.0));
}

TEST_CASE("maxpool2d matches window enumeration on random input") {
    Rng rng(5);
    auto x = random_tensor({1, 2, 4, 4}, rng);
    auto y = maxpool2d(x);
    for (int c = 0; c < 2; ++c)
        for (int oh = 0; oh < 2; ++oh)
            for (int ow = 0; ow < 2; ++ow) {
                float best = -1e30f;
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        best = std::max(best, x.at4(0, c, 2 * oh + a, 2 * ow + b));
                CHECK(y.at4(0, c, oh, ow) == doctest::Approx(best));
            }
}

TEST_CASE("maxpool2d backward routes to first argmax on ties") {
    auto x = Tensor::from_data({1, 1, 2, 2}, {7, 7, 7, 7});
    x.set_requires_grad(true);
    backward(sum(maxpool2d(x)));
    CHECK(x.grad_vec()[0] == doctest::Approx(1.0));  // row-major first occurrence
    CHECK(x.grad_vec()[1] == doctest::Approx(0.0));
    CHECK(x.grad_vec()[2] == doctest::Approx(0.0));
    CHECK(x.grad_vec()[3] == doctest::Approx(0.0));
}

TEST_CASE("softmax basics") {
    auto x = Tensor::from_data({1, 3}, {0, 0, 0});
    auto y = softmax(x, 1);
    for (int i = 0; i < 3; ++i) CHECK(y.data()[i] == doctest::Approx(1.0 / 3).epsilon(1e-6));

    auto z = Tensor::from_data({1, 2}, {0.0f, std::log(3.0f)});
    auto yz = softmax(z, 1);
    CHECK(yz.data()[0] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(yz.data()[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax rows are a probability distribution") {
    Rng rng(9);
    auto x = random_tensor({7, 13}, rng, -4.0f, 4.0f);
    auto y = softmax(x, 1);
    for (int i = 0; i < 7; ++i) {
        double total = 0;
        for (int j = 0; j < 13; ++j) {
            CHECK(y.at2(i, j) >= 0.0f);
            total += y.at2(i, j);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("batchnorm2d normalizes per channel in training mode") {
    Rng rng(21);
    auto x = random_tensor({2, 3, 4, 4}, rng, -2.0f, 5.0f);
    auto gamma = Tensor::filled({3}, 1.0f);
    auto beta = Tensor::zeros({3});
    auto rm = Tensor::zeros({3});
    auto rv = Tensor::filled({3}, 1.0f);
    auto y = batchnorm2d(x, gamma, beta, rm, rv, true);
    for (int c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (int n = 0; n < 2; ++n)
            for (int i = 0; i < 16; ++i) mean += y.vec()[(n * 3 + c) * 16 + i];
        mean /= 32;
        for (int n = 0; n < 2; ++n)
            for (int i = 0; i < 16; ++i) {
                const double d = y.vec()[(n * 3 + c) * 16 + i] - mean;
                var += d * d;
            }
        var /= 32;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm2d passes through standardized input") {
    auto x = Tensor::from_data({1, 1, 2, 2}, {-1, 1, -1, 1});
    auto gamma = Tensor::filled({1}, 1.0f);
    auto beta = Tensor::zeros({1});
    auto rm = Tensor::zeros({1});
    auto rv = Tensor::filled({1}, 1.0f);
    auto y = batchnorm2d(x, gamma, beta, rm, rv, true);
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-4));
}

TEST_CASE("batchnorm2d eval mode follows hand-tracked running stats") {
    Rng rng(33);
    auto gamma = Tensor::filled({2}, 1.0f);
    auto beta = Tensor::zeros({2});
    auto rm = Tensor::zeros({2});
    auto rv = Tensor::filled({2}, 1.0f);
    // running-average oracle tracked in doubles
    double orm[2] = {0, 0}, orv[2] = {1, 1};
    for (int step = 0; step < 3; ++step) {
        auto x = random_tensor({2, 2, 3, 3}, rng, -1.0f, 3.0f);
        batchnorm2d(x, gamma, beta, rm, rv, true);
        for (int c = 0; c < 2; ++c) {
            double mean = 0, var = 0;
            for (int n = 0; n < 2; ++n)
                for (int i = 0; i < 9; ++i) mean += x.vec()[(n * 2 + c) * 9 + i];
            mean /= 18;
            for (int n = 0; n < 2; ++n)
                for (int i = 0; i < 9; ++i) {
                    const double d = x.vec()[(n * 2 + c) * 9 + i] - mean;
                    var += d * d;
                }
            var /= 18;
            orm[c] = 0.9 * orm[c] + 0.1 * mean;
            orv[c] = 0.9 * orv[c] + 0.1 * var;
        }
    }
    for (int c = 0; c < 2; ++c) {
        CHECK(rm.data()[c] == doctest::Approx(orm[c]).epsilon(1e-4));
        CHECK(rv.data()[c] == doctest::Approx(orv[c]).epsilon(1e-4));
    }
    // eval output = (x - rm) / sqrt(rv + eps)
    auto x = random_tensor({1, 2, 2, 2}, rng);
    auto y = batchnorm2d(x, gamma, beta, rm, rv, false);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 4; ++i) {
            const double expect = (x.vec()[c * 4 + i] - orm[c]) / std::sqrt(orv[c] + 1e-5);
            CHECK(y.vec()[c * 4 + i] == doctest::Approx(expect).epsilon(1e-4));
        }
}

TEST_CASE("dropout identity modes and seeded reproducibility") {
    Rng rng(1);
    auto x = random_tensor({1, 2, 3, 3}, rng);
    Rng r1(77);
    auto eval_out = dropout(x, 0.3, false, r1);
    for (int i = 0; i < x.numel(); ++i) CHECK(eval_out.data()[i] == x.data()[i]);
    auto p0 = dropout(x, 0.0, true, r1);
    for (int i = 0; i < x.numel(); ++i) CHECK(p0.data()[i] == x.data()[i]);

    Rng ra(123), rb(123);
    auto da = dropout(x, 0.5, true, ra);
    auto db = dropout(x, 0.5, true, rb);
    for (int i = 0; i < x.numel(); ++i) CHECK(da.data()[i] == db.data()[i]);  // bit-exact
    CHECK_THROWS_AS(dropout(x, 1.0, true, ra), ConfigError);
}

TEST_CASE("elementwise op anchor values") {
    auto zero = Tensor::from_data({1}, {0.0f});
    CHECK(silu(zero).value() == doctest::Approx(0.0));
    CHECK(sigmoid(zero).value() == doctest::Approx(0.5));
    CHECK(relu(Tensor::from_data({1}, {-2.0f})).value() == doctest::Approx(0.0));

    auto c = Tensor::filled({2, 3, 4, 4}, 0.75f);
    auto pooled = global_avg_pool(c);
    REQUIRE(pooled.shape() == Shape{2, 3});
    for (int i = 0; i < 6; ++i) CHECK(pooled.data()[i] == doctest::Approx(0.75));
}

TEST_CASE("concat narrow reshape permute round trips") {
    Rng rng(2);
    auto a = random_tensor({2, 3}, rng);
    auto b = random_tensor({1, 3}, rng);
    auto cat = concat<float>({a, b}, 0);
    REQUIRE(cat.shape() == Shape{3, 3});
    auto back = narrow0(cat, 0, 2);
    for (int i = 0; i < 6; ++i) CHECK(back.data()[i] == a.data()[i]);

    auto r = reshape(a, {3, 2});
    CHECK(r.shape() == Shape{3, 2});
    auto p = permute(a, {1, 0});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) CHECK(p.at2(j, i) == a.at2(i, j));
}

TEST_CASE("backward populates leaf gradients") {
    Rng rng(4);
    auto x = random_tensor({2, 3}, rng);
    x.set_requires_grad(true);
    backward(sum(x));
    for (const float g : x.grad_vec()) CHECK(g == doctest::Approx(1.0));

    x.zero_grad();
    backward(sum(mul(x, x)));
    for (int i = 0; i < x.numel(); ++i)
        CHECK(x.grad_vec()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-5));
}

TEST_CASE("backward rejects non-scalar loss and empty tape") {
    Rng rng(4);
    auto x = random_tensor({2, 2}, rng);
    x.set_requires_grad(true);
    auto y = mul(x, x);
    CHECK_THROWS_AS(backward(y), ContractError);  // non-scalar
    auto s = sum(y);
    backward(s);                                  // clears the tape
    CHECK_THROWS_AS(backward(s), ContractError);  // tape now empty
}

TEST_CASE("composite conv-silu-sum gradient matches finite differences at 32-bit") {
    Rng rng(8);
    auto x = random_tensor({1, 2, 5, 5}, rng, -0.5f, 0.5f);
    auto w = random_tensor({2, 2, 3, 3}, rng, -0.5f, 0.5f);
    auto b = Tensor::zeros({2});
    x.set_requires_grad(true);
    backward(sum(silu(conv2d(x, w, b, 1, 1, 1))));
    const std::vector<float> analytic = x.grad_vec();

    const double h = 1e-3;
    double worst = 0;
    for (int i = 0; i < x.numel(); i += 3) {
        NoGradGuard no_grad;
        const float orig = x.data()[i];
        x.data()[i] = orig + static_cast<float>(h);
        const double fp = sum(silu(conv2d(x, w, b, 1, 1, 1))).value();
        x.data()[i] = orig - static_cast<float>(h);
        const double fm = sum(silu(conv2d(x, w, b, 1, 1, 1))).value();
        x.data()[i] = orig;
        const double fd = (fp - fm) / (2 * h);
        const double an = static_cast<double>(analytic[i]);
        // float cancellation in f dominates below |g| ~ 0.1; the strict check
        // runs in the 64-bit shadow suite
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 0.1});
        worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("gradients accumulate over shared subexpressions") {
    Rng rng(6);
    auto x = random_tensor({4}, rng);
    x.set_requires_grad(true);
    auto a = random_tensor({4}, rng);
    auto b = random_tensor({4}, rng);
    backward(add(sum(mul(x, a)), sum(mul(x, b))));
    for (int i = 0; i < 4; ++i)
        CHECK(x.grad_vec()[i] == doctest::Approx(a.data()[i] + b.data()[i]).epsilon(1e-6));

    // against single-path runs
    x.zero_grad();
    backward(sum(mul(x, a)));
    std::vector<float> ga = x.grad_vec();
    x.zero_grad();
    backward(sum(mul(x, b)));
    for (int i = 0; i < 4; ++i)
        CHECK(ga[i] + x.grad_vec()[i] == doctest::Approx(a.data()[i] + b.data()[i]).epsilon(1e-6));
}

TEST_CASE("identical seeds give bit-identical op outputs") {
    Rng ra(99), rb(99);
    auto xa = random_tensor({1, 3, 6, 6}, ra);
    auto xb = random_tensor({1, 3, 6, 6}, rb);
    auto wa = random_tensor({4, 3, 3, 3}, ra);
    auto wb = random_tensor({4, 3, 3, 3}, rb);
    auto ba = Tensor::zeros({4});
    auto ya = conv2d(xa, wa, ba, 1, 1, 1);
    auto yb = conv2d(xb, wb, ba, 1, 1, 1);
    for (int i = 0; i < ya.numel(); ++i) CHECK(ya.data()[i] == yb.data()[i]);
}

TEST_CASE("debug finite check flags NaN") {
    set_debug_check_finite(true);
    auto x = Tensor::from_data({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    auto y = Tensor::filled({2}, 1.0f);
    CHECK_THROWS_AS(add(x, y), ContractError);
    set_debug_check_finite(false);
    CHECK_NOTHROW(add(x, y));
}

TEST_CASE("upsample_bilinear2x fundamentals") {
    auto c = Tensor::filled({1, 2, 3, 3}, 1.5f);
    auto y = upsample_bilinear2x(c);
    REQUIRE(y.shape() == Shape{1, 2, 6, 6});
    for (int i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(1.5));

    // 2x2 ramp against the closed-form align-corners-false interpolation
    auto x = Tensor::from_data({1, 1, 2, 2}, {0, 1, 2, 3});
    auto up = upsample_bilinear2x(x);
    auto sample = [&](double oy, double ox) {
        auto src = [&](int yy, int xx) { return static_cast<double>(x.data()[yy * 2 + xx]); };
        double sy = std::max((oy + 0.5) / 2 - 0.5, 0.0), sx = std::max((ox + 0.5) / 2 - 0.5, 0.0);
        int y0 = std::min(static_cast<int>(sy), 1), x0 = std::min(static_cast<int>(sx), 1);
        int y1 = std::min(y0 + 1, 1), x1 = std::min(x0 + 1, 1);
        double fy = sy - y0, fx = sx - x0;
        return (src(y0, x0) * (1 - fx) + src(y0, x1) * fx) * (1 - fy) +
               (src(y1, x0) * (1 - fx) + src(y1, x1) * fx) * fy;
    };
    for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 4; ++ox)
            CHECK(up.data()[oy * 4 + ox] == doctest::Approx(sample(oy, ox)).epsilon(1e-6));
}
