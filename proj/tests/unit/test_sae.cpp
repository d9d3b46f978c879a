#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "latentir/errors.hpp"
#include "latentir/recon_eval.hpp"
#include "latentir/sae.hpp"
#include "latentir/synth.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

namespace latentir::sae {
namespace {

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(r, c) = rows[r][c];
        }
    }
    return m;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(n, d);
    for (auto& v : m.data()) {
        v = g(rng);
    }
    return m;
}

SaeConfig tiny(std::size_t d, std::size_t m, std::size_t k, std::uint64_t seed = 1) {
    SaeConfig c;
    c.d = d;
    c.m = m;
    c.k = k;
    c.seed = seed;
    c.lr = 1e-3;
    c.batch_size = 4;
    c.epochs = 1;
    return c;
}

TEST(SaeConfig, Validation) {
    EXPECT_THROW(tiny(4, 3, 1).validate(), ValidationError);  // m < d
    EXPECT_THROW(tiny(4, 8, 0).validate(), ValidationError);
    EXPECT_THROW(tiny(4, 8, 8).validate(), ValidationError);
    auto c = tiny(4, 8, 2);
    c.lambda = -1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    EXPECT_EQ(tiny(4, 8, 3).effective_aux_width(), 6u);
    EXPECT_EQ(SaeConfig::with_dims(16, 8).m, 512u);
}

TEST(InitParams, DeterministicUnitRows) {
    const auto a = init_params(tiny(4, 8, 2));
    EXPECT_EQ(a, init_params(tiny(4, 8, 2)));
    EXPECT_NE(a, init_params(tiny(4, 8, 2, 2)));
    for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_NEAR(std::sqrt(dot(a.w_dec.row(j), a.w_dec.row(j))), 1.0, 1e-6);
    }
    EXPECT_EQ(a.w_enc, a.w_dec);
    for (const double b : a.b_enc) {
        EXPECT_EQ(b, 0.0);
    }
}

TEST(InitParams, DecoderBiasIsSampleMean) {
    const auto sample = from_rows({{1, 2, 3}, {3, 4, 5}});
    const auto p = init_params(tiny(3, 6, 2), &sample);
    EXPECT_EQ(decode(p, SparseCode{}), (std::vector<double>{2, 3, 4}));
}

TEST(EncodePre, MatchesTripleLoop) {
    std::mt19937_64 rng(3);
    auto p = init_params(tiny(3, 5, 2));
    for (auto& b : p.b_enc) {
        b = std::normal_distribution<double>(0, 1)(rng);
    }
    const auto h = random_matrix(rng, 3, 3);
    const auto pre = encode_pre(p, h);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double s = p.b_enc[j];
            for (std::size_t c = 0; c < 3; ++c) {
                s += p.w_enc(j, c) * h(i, c);
            }
            EXPECT_NEAR(pre(i, j), s, 1e-12);
        }
    }
    // h = 0 yields b_enc.
    const auto zero = encode_pre(p, Matrix(1, 3));
    for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_EQ(zero(0, j), p.b_enc[j]);
    }
    EXPECT_THROW((void)encode_pre(p, Matrix(1, 4)), ValidationError);
}

TEST(BatchTopK, HandExample) {
    const auto a = from_rows({{1, 3, 0.5, 0.2}, {2, 0.1, 0.4, 0.3}});
    EXPECT_EQ(batch_topk_mask(a, 1), from_rows({{0, 3, 0, 0}, {2, 0, 0, 0}}));
}

TEST(BatchTopK, AllNegativeGivesZeros) {
    const auto a = from_rows({{-1, -2, -3}, {-0.5, -0.1, -4}});
    EXPECT_EQ(batch_topk_mask(a, 1), Matrix(2, 3));
}

TEST(BatchTopK, ExactlyNkPositivesKept) {
    const auto a = from_rows({{0.3, -1, -1}, {-1, 0.2, -1}});
    EXPECT_EQ(batch_topk_mask(a, 1), from_rows({{0.3, 0, 0}, {0, 0.2, 0}}));
}

TEST(BatchTopK, TiesGoToLowerFlatIndex) {
    const auto a = from_rows({{1, 1, 1}, {1, 1, 1}});
    EXPECT_EQ(batch_topk_mask(a, 1), from_rows({{1, 1, 0}, {0, 0, 0}}));
}

TEST(BatchTopK, RejectsBadK) {
    EXPECT_THROW((void)batch_topk_mask(Matrix(2, 3), 3), ValidationError);
    EXPECT_THROW((void)batch_topk_mask(Matrix(2, 3), 0), ValidationError);
}

TEST(BatchTopK, PropertyMatchesSortOracle) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
        const auto m = std::uniform_int_distribution<std::size_t>(2, 32)(rng);
        const auto k = std::uniform_int_distribution<std::size_t>(1, m - 1)(rng);
        const auto a = random_matrix(rng, n, m);
        const auto got = batch_topk_mask(a, k);
        ASSERT_EQ(got, oracle::batch_topk(a, k)) << "trial " << trial;
        std::size_t positives = 0, nnz = 0;
        for (std::size_t i = 0; i < a.data().size(); ++i) {
            positives += a.data()[i] > 0 ? 1 : 0;
            nnz += got.data()[i] != 0 ? 1 : 0;
        }
        if (positives >= n * k) {
            EXPECT_EQ(nnz, n * k);
        }
    }
}

TEST(Theta, SmallestSurvivorAndRunningMean) {
    EXPECT_EQ(smallest_survivor(from_rows({{0, 0.7, 0}, {0.9, 0, 0}})), 0.7);
    EXPECT_FALSE(smallest_survivor(Matrix(2, 2)).has_value());

    auto state = TrainState::fresh(2, 3);
    const std::vector<Matrix> one = {from_rows({{0, 0.7, 0}, {0.9, 0, 0}})};
    EXPECT_DOUBLE_EQ(calibrate_theta(state, one), 0.7);

    auto state2 = TrainState::fresh(2, 3);
    const std::vector<Matrix> two = {from_rows({{0.6, 0, 0}}), from_rows({{1.0, 0, 0}})};
    EXPECT_DOUBLE_EQ(calibrate_theta(state2, two), 0.8);

    auto empty = TrainState::fresh(2, 3);
    EXPECT_THROW((void)calibrate_theta(empty, std::vector<Matrix>{}), ValidationError);
}

TEST(EncodeInfer, Thresholding) {
    auto p = SaeParams::zeros(3, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        p.w_enc(j, j) = 1.0;
    }
    const std::vector<double> h = {0.6, 0.4, -0.2};
    const auto code = encode_infer(p, h, 0.5, "x");
    EXPECT_EQ(code.indices, std::vector<std::uint32_t>{0});
    EXPECT_EQ(code.values, std::vector<double>{0.6});
    EXPECT_EQ(code.origin_id, "x");
    EXPECT_TRUE(encode_infer(p, h, 0.7).empty());
    // theta = 0: every positive pre-activation.
    EXPECT_EQ(encode_infer(p, h, 0.0).indices, (std::vector<std::uint32_t>{0, 1}));
}

TEST(Decode, MatchesDenseMultiply) {
    std::mt19937_64 rng(5);
    auto p = init_params(tiny(4, 10, 3));
    for (auto& b : p.b_dec) {
        b = std::normal_distribution<double>(0, 1)(rng);
    }
    for (int trial = 0; trial < 20; ++trial) {
        const auto code = oracle::random_code(rng, 10, 6);
        const auto dense = oracle::densify(code, 10);
        const auto got = decode(p, code);
        for (std::size_t c = 0; c < 4; ++c) {
            double s = p.b_dec[c];
            for (std::size_t j = 0; j < 10; ++j) {
                s += dense[j] * p.w_dec(j, c);
            }
            EXPECT_NEAR(got[c], s, 1e-12);
        }
    }
    SparseCode single;
    single.indices = {2};
    single.values = {1.0};
    auto p0 = p;
    std::fill(p0.b_dec.begin(), p0.b_dec.end(), 0.0);
    const auto row = decode(p0, single);
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_EQ(row[c], p.w_dec(2, c));
    }
    SparseCode bad;
    bad.indices = {10};
    bad.values = {1.0};
    EXPECT_THROW((void)decode(p, bad), ValidationError);
}

TEST(AuxTerm, ZeroWithoutDeadOrResidual) {
    std::mt19937_64 rng(2);
    const auto p = init_params(tiny(3, 6, 2));
    const auto pre = random_matrix(rng, 2, 6);
    const auto residual = random_matrix(rng, 2, 3);
    EXPECT_EQ(aux_term(p, pre, residual, std::vector<bool>(6, false), 4).loss, 0.0);
    // Dead latents that never fire positive are not eligible either.
    Matrix negative(2, 6);
    for (auto& x : negative.data()) {
        x = -1.0;
    }
    EXPECT_EQ(aux_term(p, negative, residual, std::vector<bool>(6, true), 4).loss, 0.0);
}

TEST(AuxTerm, DeadAtomSpanningResidualShrinksError) {
    auto p = SaeParams::zeros(2, 2);
    p.w_dec(0, 0) = 1.0;
    p.w_dec(1, 1) = 1.0;
    const auto residual = from_rows({{0.0, 0.5}});
    // Latent 1 is dead, its pre-activation 0.4 pushes its atom toward the residual.
    const auto pre = from_rows({{0.1, 0.4}});
    const auto t = aux_term(p, pre, residual, {false, true}, 2);
    EXPECT_EQ(t.selected.front(), std::vector<std::uint32_t>{1});
    EXPECT_LT(t.loss, 0.25);
    EXPECT_NEAR(t.loss, 0.01, 1e-12);
}

TEST(Gradients, FiniteDifferencesOnSmallConfig) {
    std::mt19937_64 rng(8);
    auto cfg = tiny(3, 6, 2);
    const auto batch = random_matrix(rng, 2, 3);
    auto p = init_params(cfg, &batch);
    for (auto& b : p.b_enc) {
        b = 0.2 * std::normal_distribution<double>(0, 1)(rng);
    }
    std::vector<bool> dead = {false, true, false, true, true, false};
    const auto sel = select_latents(encode_pre(p, batch), cfg.k, dead, cfg.effective_aux_width());
    const auto check = oracle::finite_difference_check(p, batch, sel, cfg.lambda, 1e-4, 1e-8, 1e-4);
    EXPECT_LE(check.worst_excess, 0.0) << "worst relative " << check.worst_rel;
}

TEST(TrainStep, DecreasesLossAndKeepsUnitRows) {
    std::mt19937_64 rng(4);
    auto cfg = tiny(4, 8, 2);
    cfg.lr = 1e-3;
    const auto batch = random_matrix(rng, 8, 4);
    auto p = init_params(cfg, &batch);
    auto state = TrainState::fresh(4, 8);
    const double before = batch_loss(p, state, batch, cfg).total;
    (void)train_step(p, state, batch, cfg);
    EXPECT_LT(batch_loss(p, state, batch, cfg).total, before);
    EXPECT_EQ(state.step, 1u);
    EXPECT_GT(state.theta, 0.0);
    for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_NEAR(std::sqrt(dot(p.w_dec.row(j), p.w_dec.row(j))), 1.0, 1e-6);
    }
}

TEST(TrainStep, NonFiniteLossAborts) {
    auto cfg = tiny(2, 4, 1);
    auto batch = Matrix(2, 2, 1.0);
    batch(0, 0) = std::numeric_limits<double>::quiet_NaN();
    auto p = init_params(cfg);
    auto state = TrainState::fresh(2, 4);
    EXPECT_THROW((void)train_step(p, state, batch, cfg), NumericError);
}

TEST(TrainStep, DeadCountersResetOnFire) {
    std::mt19937_64 rng(6);
    auto cfg = tiny(3, 6, 1);
    const auto batch = random_matrix(rng, 4, 3);
    auto p = init_params(cfg, &batch);
    auto state = TrainState::fresh(3, 6);
    (void)train_step(p, state, batch, cfg);
    std::size_t fired = 0;
    for (const auto s : state.steps_since_fire) {
        EXPECT_LE(s, 1u);
        fired += s == 0 ? 1 : 0;
    }
    EXPECT_GE(fired, 1u);
    EXPECT_LE(fired, 4u);
}

TEST(Nmse, DefinitionAndScaleFreedom) {
    std::mt19937_64 rng(9);
    const auto h = random_matrix(rng, 10, 3);
    EXPECT_EQ(nmse(h, h), 0.0);
    Matrix mean(10, 3);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (std::size_t r = 0; r < 10; ++r) {
            s += h(r, c);
        }
        for (std::size_t r = 0; r < 10; ++r) {
            mean(r, c) = s / 10;
        }
    }
    EXPECT_NEAR(nmse(h, mean), 1.0, 1e-12);

    const auto hat = random_matrix(rng, 10, 3);
    double num = 0, den = 0;
    for (std::size_t r = 0; r < 10; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            num += (h(r, c) - hat(r, c)) * (h(r, c) - hat(r, c));
            den += (h(r, c) - mean(r, c)) * (h(r, c) - mean(r, c));
        }
    }
    EXPECT_NEAR(nmse(h, hat), num / den, 1e-9);

    auto scaled = h;
    auto scaled_hat = hat;
    for (auto& v : scaled.data()) {
        v *= -3.5;
    }
    for (auto& v : scaled_hat.data()) {
        v *= -3.5;
    }
    EXPECT_NEAR(nmse(scaled, scaled_hat), nmse(h, hat), 1e-12);
    EXPECT_THROW((void)nmse(Matrix(3, 2, 1.0), Matrix(3, 2)), ValidationError);
    EXPECT_THROW((void)nmse(h, Matrix(9, 3)), ValidationError);
}

TEST(Checkpoint, RoundTripExact) {
    test::TempDir dir;
    std::mt19937_64 rng(1);
    auto p = init_params(tiny(3, 6, 2));
    for (auto& v : p.b_enc) {
        v = std::normal_distribution<double>(0, 1)(rng);
    }
    Checkpoint c{p, 2, 0.123456789, "abc"};
    write_checkpoint(c, dir.file("m.ckpt"));
    EXPECT_EQ(read_checkpoint(dir.file("m.ckpt")), c);
    auto bytes = encode_checkpoint(c);
    bytes[0] = 'X';
    EXPECT_THROW((void)decode_checkpoint(bytes, "m"), FormatError);
    EXPECT_THROW((void)decode_checkpoint(encode_checkpoint(c).substr(0, 30), "m"), FormatError);
}

// -- fitted-model properties on the synthetic corpus

struct Synthetic {
    ingest::SynthData data = ingest::synth_generate(ingest::SynthSpec{});
    Matrix x = to_matrix(data.doc_embeddings);
};

const Synthetic& synthetic() {
    static const Synthetic s;
    return s;
}

SaeConfig desk(std::size_t k, std::uint64_t seed) {
    SaeConfig c;
    c.d = 16;
    c.m = 64;
    c.k = k;
    c.lr = 1e-3;
    c.batch_size = 256;
    c.epochs = 200;
    c.seed = seed;
    return c;
}

double fitted_nmse(const SaeConfig& c) {
    const auto& s = synthetic();
    const auto r = fit(s.x, c);
    return nmse(s.x, to_matrix(recon::reconstruct_store(r.params, r.state.theta, s.data.doc_embeddings)));
}

TEST(Fit, DeterministicUnderSeed) {
    auto c = desk(4, 1);
    c.epochs = 5;
    const auto a = fit(synthetic().x, c);
    const auto b = fit(synthetic().x, c);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.state.theta, b.state.theta);
    EXPECT_EQ(a.state.loss_log, b.state.loss_log);
}

TEST(Fit, SparseCodeReachesTargetNmseWithLongerBudget) {
    // k = 4 needs a faster learning rate than the desk default to converge in budget.
    auto c = desk(4, 7);
    c.lr = 1e-2;
    EXPECT_LT(fitted_nmse(c), 0.1);
}

TEST(Fit, LargerKReconstructsBetter) {
    std::vector<double> k4, k8;
    for (const std::uint64_t seed : {1, 2, 3}) {
        k4.push_back(fitted_nmse(desk(4, seed)));
        k8.push_back(fitted_nmse(desk(8, seed)));
    }
    std::sort(k4.begin(), k4.end());
    std::sort(k8.begin(), k8.end());
    EXPECT_LE(k8[1], k4[1]);
}

TEST(Fit, ThresholdReproducesBatchSupport) {
    const auto& s = synthetic();
    const auto c = desk(8, 7);
    const auto r = fit(s.x, c);
    std::size_t agree = 0;
    const std::size_t n = s.x.rows();
    for (std::size_t start = 0; start < n; start += c.batch_size) {
        const auto rows = std::min(c.batch_size, n - start);
        Matrix batch(rows, s.x.cols());
        for (std::size_t i = 0; i < rows; ++i) {
            std::copy(s.x.row(start + i).begin(), s.x.row(start + i).end(), batch.row(i).begin());
        }
        const auto masked = batch_topk_mask(encode_pre(r.params, batch), c.k);
        for (std::size_t i = 0; i < rows; ++i) {
            std::set<std::uint32_t> batch_support, infer_support;
            for (std::size_t j = 0; j < c.m; ++j) {
                if (masked(i, j) > 0) {
                    batch_support.insert(static_cast<std::uint32_t>(j));
                }
            }
            const auto code = encode_infer(r.params, batch.row(i), r.state.theta);
            infer_support.insert(code.indices.begin(), code.indices.end());
            std::size_t inter = 0;
            for (const auto j : batch_support) {
                inter += infer_support.count(j);
            }
            const auto uni = batch_support.size() + infer_support.size() - inter;
            const double jaccard = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            agree += jaccard >= 0.8 ? 1 : 0;
        }
    }
    EXPECT_GE(static_cast<double>(agree) / static_cast<double>(n), 0.9);
}

TEST(LossLog, CsvWithDigestHeader) {
    test::TempDir dir;
    write_loss_log({{1, 0.5, 0.25}, {2, 0.4, 0.0}}, dir.file("log.csv"), "d1");
    std::ifstream in(dir.file("log.csv"));
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    EXPECT_EQ(l1, "# config_digest=d1");
    EXPECT_EQ(l2, "step,recon,aux");
    EXPECT_EQ(l3.rfind("1,", 0), 0u);
}

}  // namespace
}  // namespace latentir::sae
