#include <doctest.h>

#include <cmath>

#include "ucm/objectives.hpp"
#include "ucm/oracle.hpp"

using namespace ucm;

namespace {

Tensor random_logits(Shape shape, Rng& rng, float lo = -2.0f, float hi = 2.0f) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

std::vector<std::int32_t> random_mask(std::size_t n, int k, Rng& rng) {
    std::vector<std::int32_t> m(n);
    for (auto& v : m) v = static_cast<std::int32_t>(rng.uniform_below(k));
    return m;
}

}  // namespace

TEST_CASE("cross entropy anchors") {
    // confident correct prediction at margin 20
    auto logits = Tensor::zeros({1, 4, 2, 2});
    std::vector<std::int32_t> target{0, 1, 2, 3};
    for (int p = 0; p < 4; ++p) logits.vec()[target[p] * 4 + p] = 20.0f;
    CHECK(cross_entropy(logits, target).value() < 1e-3f);

    // uniform logits, K=4 -> ln 4
    auto uniform = Tensor::zeros({1, 4, 2, 2});
    CHECK(cross_entropy(uniform, target).value() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy matches per-pixel enumeration") {
    Rng rng(31);
    auto logits = random_logits({2, 3, 2, 2}, rng);
    auto target = random_mask(8, 3, rng);
    const double got = cross_entropy(logits, target).value();

    double expect = 0;
    for (int n = 0; n < 2; ++n)
        for (int p = 0; p < 4; ++p) {
            double denom = 0;
            for (int c = 0; c < 3; ++c) denom += std::exp(logits.vec()[(n * 3 + c) * 4 + p]);
            expect += std::log(denom) -
                      logits.vec()[(n * 3 + target[n * 4 + p]) * 4 + p];
        }
    expect /= 8;
    CHECK(got == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("cross entropy rejects bad targets") {
    auto logits = Tensor::zeros({1, 3, 2, 2});
    std::vector<std::int32_t> bad{0, 1, 3, 0};
    CHECK_THROWS_AS(cross_entropy(logits, bad), ContractError);
    std::vector<std::int32_t> short_target{0, 1};
    CHECK_THROWS_AS(cross_entropy(logits, short_target), ContractError);
}

TEST_CASE("dice loss is zero for a one-hot-perfect prediction") {
    // binary head: saturated logits make sigmoid exactly 0/1 in float
    auto logits = Tensor::zeros({1, 1, 2, 2});
    std::vector<std::int32_t> target{1, 0, 1, 1};
    for (int p = 0; p < 4; ++p) logits.vec()[p] = target[p] ? 40.0f : -40.0f;
    CHECK(dice_loss(logits, target, 1.0).value() == doctest::Approx(0.0).epsilon(1e-6));

    // multi-class, margin 40
    auto ml = Tensor::zeros({1, 3, 2, 2});
    std::vector<std::int32_t> mt{0, 2, 1, 2};
    for (int p = 0; p < 4; ++p) ml.vec()[mt[p] * 4 + p] = 40.0f;
    CHECK(dice_loss(ml, mt, 1.0).value() == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("dice loss of an all-zero prediction follows the smoothed formula") {
    auto logits = Tensor::filled({1, 1, 2, 2}, -100.0f);  // sigmoid ~ 0
    std::vector<std::int32_t> target{1, 1, 0, 1};         // |G| = 3
    const double expect = 1.0 - 1.0 / (3.0 + 1.0);
    CHECK(dice_loss(logits, target, 1.0).value() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("dice loss matches the formula oracle on random maps") {
    Rng rng(32);
    auto logits = random_logits({1, 3, 3, 3}, rng);
    auto target = random_mask(9, 3, rng);
    const double got = dice_loss(logits, target, 1.0).value();

    // softmax probabilities + per-class soft dice, tracked in doubles
    double probs[3][9];
    for (int p = 0; p < 9; ++p) {
        double denom = 0;
        for (int c = 0; c < 3; ++c) denom += std::exp(logits.vec()[c * 9 + p]);
        for (int c = 0; c < 3; ++c) probs[c][p] = std::exp(logits.vec()[c * 9 + p]) / denom;
    }
    double loss = 0;
    for (int c = 0; c < 3; ++c) {
        double pg = 0, ps = 0, gs = 0;
        for (int p = 0; p < 9; ++p) {
            ps += probs[c][p];
            if (target[p] == c) {
                gs += 1;
                pg += probs[c][p];
            }
        }
        loss += 1.0 - (2 * pg + 1.0) / (ps + gs + 1.0);
    }
    loss /= 3;
    CHECK(got == doctest::Approx(loss).epsilon(1e-5));
}

TEST_CASE("hybrid loss collapses at alpha 0 and 1 and combines at 0.4") {
    Rng rng(33);
    auto logits = random_logits({1, 4, 2, 2}, rng);
    auto target = random_mask(4, 4, rng);
    LossConfig cfg;

    cfg.alpha = 1.0;
    CHECK(hybrid_loss(logits, target, cfg).value() ==
          doctest::Approx(cross_entropy(logits, target).value()).epsilon(1e-6));
    cfg.alpha = 0.0;
    CHECK(hybrid_loss(logits, target, cfg).value() ==
          doctest::Approx(dice_loss(logits, target, cfg.dice_smooth).value()).epsilon(1e-6));
    cfg.alpha = 0.4;
    const double expect = 0.4 * cross_entropy(logits, target).value() +
                          0.6 * dice_loss(logits, target, cfg.dice_smooth).value();
    CHECK(hybrid_loss(logits, target, cfg).value() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("hybrid loss is a convex combination") {
    Rng rng(34);
    for (int trial = 0; trial < 10; ++trial) {
        auto logits = random_logits({1, 3, 3, 3}, rng);
        auto target = random_mask(9, 3, rng);
        LossConfig cfg;
        cfg.alpha = rng.uniform();
        const double ce = cross_entropy(logits, target).value();
        const double dice = dice_loss(logits, target, cfg.dice_smooth).value();
        const double mix = hybrid_loss(logits, target, cfg).value();
        CHECK(mix >= std::min(ce, dice) - 1e-6);
        CHECK(mix <= std::max(ce, dice) + 1e-6);
        CHECK(mix >= 0.0);
    }
}

TEST_CASE("bce anchors and formula agreement") {
    auto zero = Tensor::zeros({1, 1, 2, 2});
    std::vector<std::int32_t> target{1, 0, 1, 0};
    CHECK(bce(zero, target).value() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    auto confident = Tensor::zeros({1, 1, 2, 2});
    for (int p = 0; p < 4; ++p) confident.vec()[p] = target[p] ? 20.0f : -20.0f;
    CHECK(bce(confident, target).value() < 1e-3f);

    Rng rng(35);
    auto logits = random_logits({1, 1, 3, 3}, rng);
    auto t = random_mask(9, 2, rng);
    double expect = 0;
    for (int p = 0; p < 9; ++p) {
        const double z = logits.vec()[p];
        const double y = t[p];
        expect += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    expect /= 9;
    CHECK(bce(logits, t).value() == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("focal loss anchors") {
    Rng rng(36);
    auto logits = random_logits({1, 1, 3, 3}, rng);
    auto target = random_mask(9, 2, rng);

    // gamma = 0 equals bce exactly (same stable softplus form)
    CHECK(focal(logits, target, 0.0).value() == bce(logits, target).value());

    // p_t = 0.5 pixel contributes 0.5^gamma * ln 2
    auto single = Tensor::zeros({1, 1, 1, 1});
    std::vector<std::int32_t> one{1};
    CHECK(focal(single, one, 2.0).value() ==
          doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-6));

    // matches the direct formula
    const double gamma = 2.0;
    double expect = 0;
    for (int p = 0; p < 9; ++p) {
        const double z = logits.vec()[p];
        const double pr = 1.0 / (1.0 + std::exp(-z));
        const double pt = target[p] == 1 ? pr : 1.0 - pr;
        expect += std::pow(1.0 - pt, gamma) * (-std::log(pt));
    }
    expect /= 9;
    CHECK(focal(logits, target, gamma).value() == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("focal never exceeds bce for nonnegative gamma") {
    Rng rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        auto logits = random_logits({1, 1, 4, 4}, rng, -5.0f, 5.0f);
        auto target = random_mask(16, 2, rng);
        for (double gamma : {0.0, 0.5, 2.0, 4.0})
            CHECK(focal(logits, target, gamma).value() <= bce(logits, target).value() + 1e-7);
    }
}

TEST_CASE("bce_focal sums its two terms; gamma 0 doubles bce") {
    Rng rng(38);
    auto logits = random_logits({1, 1, 3, 3}, rng);
    auto target = random_mask(9, 2, rng);
    LossConfig cfg;
    cfg.mode = LossConfig::Mode::kBceFocal;
    const double expect =
        bce(logits, target).value() + focal(logits, target, cfg.gamma).value();
    CHECK(bce_focal(logits, target, cfg).value() == doctest::Approx(expect).epsilon(1e-7));

    cfg.gamma = 0.0;
    CHECK(bce_focal(logits, target, cfg).value() ==
          doctest::Approx(2.0 * bce(logits, target).value()).epsilon(1e-7));
}

TEST_CASE("confusion counting basics") {
    std::vector<std::int32_t> a{0, 1, 1, 0}, b{0, 1, 1, 0};
    auto same = confusion(a, b, 2);
    CHECK(same.fp[1] == 0);
    CHECK(same.fn[1] == 0);
    CHECK(same.tp[1] == 2);

    std::vector<std::int32_t> inv{1, 0, 0, 1};
    auto comp = confusion(a, inv, 2);
    CHECK(comp.tp[1] == 0);
    CHECK(comp.tn[1] == 0);

    // counts partition the pixels for every class
    Rng rng(39);
    auto p = random_mask(64, 3, rng);
    auto g = random_mask(64, 3, rng);
    auto c = confusion(p, g, 3);
    for (int cls = 0; cls < 3; ++cls)
        CHECK(c.tp[cls] + c.fp[cls] + c.fn[cls] + c.tn[cls] == 64);
}

TEST_CASE("metric anchor values") {
    // pred == gt nonempty -> all ones
    std::vector<std::int32_t> a{1, 1, 0, 0}, b{1, 1, 0, 0};
    auto c = confusion(a, b, 2);
    CHECK(f1_score(c, 1) == 1.0);
    CHECK(iou_score(c, 1) == 1.0);
    CHECK(dsc_score(c, 1) == 1.0);

    // disjoint nonempty -> all zero
    std::vector<std::int32_t> d{1, 1, 0, 0}, e{0, 0, 1, 1};
    auto cd = confusion(d, e, 2);
    CHECK(f1_score(cd, 1) == 0.0);
    CHECK(iou_score(cd, 1) == 0.0);
    CHECK(dsc_score(cd, 1) == 0.0);

    // |P|=2, |G|=2, overlap 1
    std::vector<std::int32_t> p{1, 1, 0, 0}, g{0, 1, 1, 0};
    auto cp = confusion(p, g, 2);
    CHECK(iou_score(cp, 1) == doctest::Approx(1.0 / 3));
    CHECK(dsc_score(cp, 1) == doctest::Approx(0.5));
    CHECK(f1_score(cp, 1) == doctest::Approx(0.5));
    const auto oracle_m = oracle::enumerate_metrics(p, g, 1);
    CHECK(oracle_m.iou == doctest::Approx(iou_score(cp, 1)));
    CHECK(oracle_m.dsc == doctest::Approx(dsc_score(cp, 1)));
    CHECK(oracle_m.f1 == doctest::Approx(f1_score(cp, 1)));

    // both masks empty -> defined as 1.0
    std::vector<std::int32_t> z{0, 0, 0, 0};
    auto cz = confusion(z, z, 2);
    CHECK(f1_score(cz, 1) == 1.0);
    CHECK(iou_score(cz, 1) == 1.0);
    CHECK(dsc_score(cz, 1) == 1.0);
}

TEST_CASE("dsc equals 2 iou / (1 + iou) and f1 equals dsc on random masks") {
    Rng rng(40);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_mask(100, 2, rng);
        auto g = random_mask(100, 2, rng);
        auto c = confusion(p, g, 2);
        const double iou = iou_score(c, 1);
        const double dsc = dsc_score(c, 1);
        CHECK(dsc == doctest::Approx(2.0 * iou / (1.0 + iou)).epsilon(1e-12));
        CHECK(f1_score(c, 1) == doctest::Approx(dsc).epsilon(1e-12));
    }
}

TEST_CASE("mean dice averages foreground classes") {
    // perfect multi-class prediction
    Rng rng(41);
    auto g = random_mask(64, 4, rng);
    CHECK(mean_dice(g, g, 4) == 1.0);

    // single foreground class reduces to plain dsc
    auto p2 = random_mask(64, 2, rng);
    auto g2 = random_mask(64, 2, rng);
    CHECK(mean_dice(p2, g2, 2) == doctest::Approx(dsc_score(confusion(p2, g2, 2), 1)));

    // 3-class hand case against per-class enumeration
    std::vector<std::int32_t> p{0, 1, 1, 2, 2, 0};
    std::vector<std::int32_t> gt{0, 1, 2, 2, 1, 0};
    auto c = confusion(p, gt, 3);
    const double expect = (dsc_score(c, 1) + dsc_score(c, 2)) / 2.0;
    CHECK(mean_dice(p, gt, 3) == doctest::Approx(expect));
    const auto m1 = oracle::enumerate_metrics(p, gt, 1);
    const auto m2 = oracle::enumerate_metrics(p, gt, 2);
    CHECK(mean_dice(p, gt, 3) == doctest::Approx((m1.dsc + m2.dsc) / 2.0));
}

TEST_CASE("predict_mask thresholds binary and argmaxes multi-class") {
    auto bin = Tensor::from_data({1, 1, 2, 2}, {1.5f, -0.5f, 0.01f, -3.0f});
    CHECK(predict_mask(bin) == std::vector<std::int32_t>{1, 0, 1, 0});

    auto multi = Tensor::zeros({1, 3, 1, 2});
    multi.vec()[0 * 2 + 0] = 5.0f;  // class 0 at pixel 0
    multi.vec()[2 * 2 + 1] = 3.0f;  // class 2 at pixel 1
    CHECK(predict_mask(multi) == std::vector<std::int32_t>{0, 2});
}

TEST_CASE("loss config validation") {
    LossConfig cfg;
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = LossConfig{};
    cfg.gamma = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = LossConfig{};
    cfg.dice_smooth = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
