#include "latentir/sae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "latentir/errors.hpp"

namespace latentir::sae {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'A', 'E', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void axpy(double a, std::span<const double> x, std::span<double> y) noexcept {
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += a * x[i];
    }
}

double pre_activation(const SaeParams& p, std::size_t latent, std::span<const double> h) noexcept {
    return dot(p.w_enc.row(latent), h) + p.b_enc[latent];
}

void check_batch(const SaeParams& params, const Matrix& batch) {
    if (batch.cols() != params.d()) {
        throw ValidationError("batch has " + std::to_string(batch.cols()) + " columns, SAE input dim is " +
                              std::to_string(params.d()));
    }
}

void adamw_update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m1,
                  std::vector<double>& m2, const SaeConfig& c, double bias1, double bias2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * g;
        m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * g * g;
        const double m_hat = m1[i] / bias1;
        const double v_hat = m2[i] / bias2;
        param[i] -= c.lr * (m_hat / (std::sqrt(v_hat) + c.epsilon) + c.weight_decay * param[i]);
    }
}

void normalize_rows(Matrix& w) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto row = w.row(r);
        const double norm = std::sqrt(dot(row, row));
        if (norm > 0.0) {
            for (double& x : row) {
                x /= norm;
            }
        }
    }
}

/// Per row, the `width` dead latents with the largest positive values of `pre`, ascending ids.
std::vector<std::uint32_t> pick_aux(std::span<const double> pre, const std::vector<bool>& dead, std::size_t width) {
    std::vector<std::uint32_t> cand;
    for (std::uint32_t j = 0; j < pre.size(); ++j) {
        if (dead[j] && pre[j] > 0.0) {
            cand.push_back(j);
        }
    }
    if (cand.size() > width) {
        std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(width), cand.end(),
                         [&](std::uint32_t a, std::uint32_t b) {
                             return pre[a] != pre[b] ? pre[a] > pre[b] : a < b;
                         });
        cand.resize(width);
    }
    std::sort(cand.begin(), cand.end());
    return cand;
}

}  // namespace

// ------------------------------------------------------------------ config

void SaeConfig::validate() const {
    if (d == 0) {
        throw ValidationError("sae: d must be positive");
    }
    if (m < d) {
        throw ValidationError("sae: m must be >= d");
    }
    if (k == 0 || k >= m) {
        throw ValidationError("sae: k must satisfy 1 <= k < m");
    }
    if (!(lambda >= 0.0)) {
        throw ValidationError("sae: lambda must be >= 0");
    }
    if (!(lr > 0.0)) {
        throw ValidationError("sae: lr must be positive");
    }
    if (batch_size == 0) {
        throw ValidationError("sae: batch_size must be positive");
    }
}

SaeConfig SaeConfig::with_dims(std::size_t d, std::size_t k) {
    SaeConfig c;
    c.d = d;
    c.m = 32 * d;
    c.k = k;
    return c;
}

SaeParams SaeParams::zeros(std::size_t d, std::size_t m) {
    return {Matrix(m, d), std::vector<double>(m, 0.0), Matrix(m, d), std::vector<double>(d, 0.0)};
}

TrainState TrainState::fresh(std::size_t d, std::size_t m) {
    TrainState s;
    s.steps_since_fire.assign(m, 0);
    s.moment1 = SaeParams::zeros(d, m);
    s.moment2 = SaeParams::zeros(d, m);
    return s;
}

// ----------------------------------------------------------------- forward

SaeParams init_params(const SaeConfig& config, const Matrix* sample) {
    config.validate();
    auto p = SaeParams::zeros(config.d, config.m);
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t r = 0; r < config.m; ++r) {
        auto row = p.w_dec.row(r);
        double norm = 0.0;
        while (norm == 0.0) {
            for (double& x : row) {
                x = gauss(rng);
            }
            norm = std::sqrt(dot(row, row));
        }
        for (double& x : row) {
            x /= norm;
        }
    }
    p.w_enc = p.w_dec;
    if (sample != nullptr && sample->rows() > 0) {
        if (sample->cols() != config.d) {
            throw ValidationError("sae: sample dim does not match config.d");
        }
        for (std::size_t i = 0; i < sample->rows(); ++i) {
            axpy(1.0, sample->row(i), p.b_dec);
        }
        for (double& x : p.b_dec) {
            x /= static_cast<double>(sample->rows());
        }
    }
    return p;
}

Matrix encode_pre(const SaeParams& params, const Matrix& batch) {
    check_batch(params, batch);
    Matrix out(batch.rows(), params.m());
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        const auto h = batch.row(i);
        auto o = out.row(i);
        for (std::size_t j = 0; j < params.m(); ++j) {
            o[j] = pre_activation(params, j, h);
        }
    }
    return out;
}

Matrix batch_topk_mask(const Matrix& pre, std::size_t k) {
    if (k == 0 || k >= pre.cols()) {
        throw ValidationError("batch_topk_mask: k must satisfy 1 <= k < m");
    }
    const auto& v = pre.data();
    const std::size_t keep = pre.rows() * k;
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rect = [&](std::size_t i) { return v[i] > 0.0 ? v[i] : 0.0; };
    auto before = [&](std::size_t a, std::size_t b) {
        const double va = rect(a);
        const double vb = rect(b);
        return va != vb ? va > vb : a < b;
    };
    if (keep < order.size()) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), before);
    }
    Matrix out(pre.rows(), pre.cols());
    auto& o = out.data();
    for (std::size_t n = 0; n < std::min(keep, order.size()); ++n) {
        o[order[n]] = rect(order[n]);
    }
    return out;
}

std::optional<double> smallest_survivor(const Matrix& masked) {
    std::optional<double> best;
    for (double x : masked.data()) {
        if (x > 0.0 && (!best || x < *best)) {
            best = x;
        }
    }
    return best;
}

double calibrate_theta(TrainState& state, std::span<const Matrix> masked_batches) {
    for (const auto& batch : masked_batches) {
        if (const auto s = smallest_survivor(batch)) {
            ++state.theta_batches;
            state.theta += (*s - state.theta) / static_cast<double>(state.theta_batches);
        }
    }
    if (state.theta_batches == 0) {
        throw ValidationError("calibrate_theta: no batch with surviving activations observed");
    }
    return state.theta;
}

SparseCode encode_infer(const SaeParams& params, std::span<const double> h, double theta, std::string origin_id) {
    if (h.size() != params.d()) {
        throw ValidationError("encode_infer: input dim mismatch");
    }
    SparseCode code;
    code.origin_id = std::move(origin_id);
    for (std::uint32_t j = 0; j < params.m(); ++j) {
        const double a = pre_activation(params, j, h);
        if (a > theta && a > 0.0) {
            code.indices.push_back(j);
            code.values.push_back(a);
        }
    }
    return code;
}

std::vector<double> decode(const SaeParams& params, const SparseCode& code) {
    std::vector<double> out = params.b_dec;
    for (std::size_t n = 0; n < code.indices.size(); ++n) {
        const auto j = code.indices[n];
        if (j >= params.m()) {
            throw ValidationError("decode: latent " + std::to_string(j) + " out of range (m = " +
                                  std::to_string(params.m()) + ")");
        }
        axpy(code.values[n], params.w_dec.row(j), out);
    }
    return out;
}

// -------------------------------------------------------------------- loss

Selection select_latents(const Matrix& pre, std::size_t k, const std::vector<bool>& dead, std::size_t aux_width) {
    const auto masked = batch_topk_mask(pre, k);
    Selection sel;
    sel.active.resize(pre.rows());
    sel.aux.resize(pre.rows());
    const bool any_dead = std::find(dead.begin(), dead.end(), true) != dead.end();
    for (std::size_t i = 0; i < pre.rows(); ++i) {
        const auto row = masked.row(i);
        for (std::uint32_t j = 0; j < row.size(); ++j) {
            if (row[j] > 0.0) {
                sel.active[i].push_back(j);
            }
        }
        if (any_dead && aux_width > 0) {
            sel.aux[i] = pick_aux(pre.row(i), dead, aux_width);
        }
    }
    return sel;
}

AuxTerm aux_term(const SaeParams& params, const Matrix& pre, const Matrix& residual, const std::vector<bool>& dead,
                 std::size_t aux_width) {
    const std::size_t n = pre.rows();
    AuxTerm out;
    out.grad_pre = Matrix(n, params.m());
    out.grad_w_dec = Matrix(params.m(), params.d());
    out.selected.resize(n);
    if (n == 0) {
        return out;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> diff(params.d());
    for (std::size_t i = 0; i < n; ++i) {
        out.selected[i] = pick_aux(pre.row(i), dead, aux_width);
        if (out.selected[i].empty()) {
            continue;
        }
        const auto r = residual.row(i);
        std::copy(r.begin(), r.end(), diff.begin());
        for (const auto j : out.selected[i]) {
            axpy(-pre(i, j), params.w_dec.row(j), diff);
        }
        out.loss += dot(diff, diff) * inv_n;
        // d/d e_hat of mean ||r - e_hat||^2 = -(2/n)(r - e_hat)
        for (const auto j : out.selected[i]) {
            axpy(-2.0 * inv_n * pre(i, j), diff, out.grad_w_dec.row(j));
            out.grad_pre(i, j) = -2.0 * inv_n * dot(params.w_dec.row(j), diff);
        }
    }
    return out;
}

LossTerms evaluate_loss(const SaeParams& params, const Matrix& batch, const Selection& selection, double lambda,
                        SaeParams* grad, const Matrix* aux_target) {
    check_batch(params, batch);
    const std::size_t n = batch.rows();
    const std::size_t d = params.d();
    if (grad != nullptr) {
        *grad = SaeParams::zeros(d, params.m());
    }
    LossTerms out;
    if (n == 0) {
        return out;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> err(d);
    std::vector<double> diff(d);
    std::vector<double> g(d);
    std::vector<double> z;
    std::vector<double> a;
    for (std::size_t i = 0; i < n; ++i) {
        const auto h = batch.row(i);
        const auto& act = selection.active[i];
        const auto& aux = selection.aux[i];

        z.resize(act.size());
        for (std::size_t t = 0; t < act.size(); ++t) {
            z[t] = pre_activation(params, act[t], h);
        }
        for (std::size_t c = 0; c < d; ++c) {
            err[c] = h[c] - params.b_dec[c];
        }
        for (std::size_t t = 0; t < act.size(); ++t) {
            axpy(-z[t], params.w_dec.row(act[t]), err);
        }
        out.recon += dot(err, err) * inv_n;

        // The aux target is the main residual with gradient stopped.
        if (aux_target != nullptr) {
            const auto r = aux_target->row(i);
            std::copy(r.begin(), r.end(), diff.begin());
        } else {
            diff = err;
        }
        a.resize(aux.size());
        for (std::size_t t = 0; t < aux.size(); ++t) {
            a[t] = pre_activation(params, aux[t], h);
            axpy(-a[t], params.w_dec.row(aux[t]), diff);
        }
        if (!aux.empty()) {
            out.aux += dot(diff, diff) * inv_n;
        }

        if (grad == nullptr) {
            continue;
        }
        // dL/dh_hat = -(2/n) err
        for (std::size_t c = 0; c < d; ++c) {
            g[c] = -2.0 * inv_n * err[c];
        }
        axpy(1.0, g, grad->b_dec);
        for (std::size_t t = 0; t < act.size(); ++t) {
            const auto j = act[t];
            const double dz = dot(params.w_dec.row(j), g);
            axpy(z[t], g, grad->w_dec.row(j));
            axpy(dz, h, grad->w_enc.row(j));
            grad->b_enc[j] += dz;
        }
        // dL/de_hat = -(2 lambda / n) diff
        for (std::size_t c = 0; c < d; ++c) {
            g[c] = -2.0 * lambda * inv_n * diff[c];
        }
        for (std::size_t t = 0; t < aux.size(); ++t) {
            const auto j = aux[t];
            const double da = dot(params.w_dec.row(j), g);
            axpy(a[t], g, grad->w_dec.row(j));
            axpy(da, h, grad->w_enc.row(j));
            grad->b_enc[j] += da;
        }
    }
    out.total = out.recon + lambda * out.aux;
    return out;
}

Matrix main_residual(const SaeParams& params, const Matrix& batch, const Selection& selection) {
    check_batch(params, batch);
    Matrix out(batch.rows(), params.d());
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        const auto h = batch.row(i);
        auto e = out.row(i);
        for (std::size_t c = 0; c < e.size(); ++c) {
            e[c] = h[c] - params.b_dec[c];
        }
        for (const auto j : selection.active[i]) {
            axpy(-pre_activation(params, j, h), params.w_dec.row(j), e);
        }
    }
    return out;
}

namespace {

std::vector<bool> dead_latents(const TrainState& state, const SaeConfig& config) {
    std::vector<bool> dead(state.steps_since_fire.size());
    for (std::size_t j = 0; j < dead.size(); ++j) {
        dead[j] = state.steps_since_fire[j] >= config.dead_window;
    }
    return dead;
}

}  // namespace

LossTerms batch_loss(const SaeParams& params, const TrainState& state, const Matrix& batch, const SaeConfig& config) {
    const auto pre = encode_pre(params, batch);
    const auto sel = select_latents(pre, config.k, dead_latents(state, config), config.effective_aux_width());
    return evaluate_loss(params, batch, sel, config.lambda);
}

LossTerms train_step(SaeParams& params, TrainState& state, const Matrix& batch, const SaeConfig& config) {
    if (state.steps_since_fire.size() != params.m()) {
        throw ValidationError("train_step: state does not match params");
    }
    const auto pre = encode_pre(params, batch);
    const auto sel = select_latents(pre, config.k, dead_latents(state, config), config.effective_aux_width());
    SaeParams grad;
    const auto losses = evaluate_loss(params, batch, sel, config.lambda, &grad);
    if (!std::isfinite(losses.total)) {
        throw NumericError("train_step: non-finite loss at step " + std::to_string(state.step) +
                           " (recon=" + std::to_string(losses.recon) + ", aux=" + std::to_string(losses.aux) + ")");
    }

    ++state.step;
    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    adamw_update(params.w_enc.data(), grad.w_enc.data(), state.moment1.w_enc.data(), state.moment2.w_enc.data(),
                 config, bias1, bias2);
    adamw_update(params.b_enc, grad.b_enc, state.moment1.b_enc, state.moment2.b_enc, config, bias1, bias2);
    adamw_update(params.w_dec.data(), grad.w_dec.data(), state.moment1.w_dec.data(), state.moment2.w_dec.data(),
                 config, bias1, bias2);
    adamw_update(params.b_dec, grad.b_dec, state.moment1.b_dec, state.moment2.b_dec, config, bias1, bias2);
    normalize_rows(params.w_dec);

    std::vector<bool> fired(params.m(), false);
    double smallest = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < sel.active.size(); ++i) {
        for (const auto j : sel.active[i]) {
            fired[j] = true;
            const double v = pre(i, j);
            if (!any || v < smallest) {
                smallest = v;
                any = true;
            }
        }
    }
    for (std::size_t j = 0; j < fired.size(); ++j) {
        state.steps_since_fire[j] = fired[j] ? 0 : state.steps_since_fire[j] + 1;
    }
    if (any) {
        ++state.theta_batches;
        state.theta += (smallest - state.theta) / static_cast<double>(state.theta_batches);
    }
    state.loss_log.push_back({state.step, losses.recon, losses.aux});
    return losses;
}

namespace {

Matrix gather_rows(const Matrix& data, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = data.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace

FitResult fit(const Matrix& data, const SaeConfig& config) {
    config.validate();
    if (data.cols() != config.d) {
        throw ValidationError("fit: embeddings have dim " + std::to_string(data.cols()) + ", config.d is " +
                              std::to_string(config.d));
    }
    if (data.rows() == 0) {
        throw ValidationError("fit: no training rows");
    }
    FitResult out{init_params(config, &data), TrainState::fresh(config.d, config.m)};
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(data.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t bs = std::min(config.batch_size, data.rows());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const auto len = std::min(bs, order.size() - start);
            const auto batch = gather_rows(data, std::span<const std::size_t>(order).subspan(start, len));
            train_step(out.params, out.state, batch, config);
        }
    }

    // Inference threshold from the final params over the whole training set.
    std::vector<Matrix> masked;
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const auto len = std::min(bs, order.size() - start);
        const auto batch = gather_rows(data, std::span<const std::size_t>(order).subspan(start, len));
        masked.push_back(batch_topk_mask(encode_pre(out.params, batch), config.k));
    }
    out.state.theta = 0.0;
    out.state.theta_batches = 0;
    calibrate_theta(out.state, masked);
    return out;
}

double nmse(const Matrix& original, const Matrix& reconstructed) {
    if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
        throw ValidationError("nmse: shape mismatch");
    }
    if (original.rows() == 0) {
        throw ValidationError("nmse: empty input");
    }
    const std::size_t n = original.rows();
    const std::size_t d = original.cols();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        axpy(1.0, original.row(i), mean);
    }
    for (double& x : mean) {
        x /= static_cast<double>(n);
    }
    double err = 0.0;
    double base = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto h = original.row(i);
        const auto r = reconstructed.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            err += (h[c] - r[c]) * (h[c] - r[c]);
            base += (h[c] - mean[c]) * (h[c] - mean[c]);
        }
    }
    if (base == 0.0) {
        throw ValidationError("nmse: input has zero variance");
    }
    return err / base;
}

Matrix to_matrix(const ingest::EmbeddingStore& store) {
    Matrix out(store.count(), store.dim());
    const auto& src = store.data();
    std::copy(src.begin(), src.end(), out.data().begin());
    return out;
}

std::vector<SparseCode> encode_store(const SaeParams& params, double theta, const ingest::EmbeddingStore& store) {
    if (store.dim() != params.d()) {
        throw ValidationError("encode_store: embedding dim " + std::to_string(store.dim()) +
                              " does not match SAE input dim " + std::to_string(params.d()));
    }
    std::vector<SparseCode> out;
    out.reserve(store.count());
    std::vector<double> h(store.dim());
    for (std::size_t i = 0; i < store.count(); ++i) {
        const auto row = store.row(i);
        std::copy(row.begin(), row.end(), h.begin());
        out.push_back(encode_infer(params, h, theta, store.ids()[i]));
    }
    return out;
}

// -------------------------------------------------------------- checkpoint

std::string encode_checkpoint(const Checkpoint& ckpt) {
    const auto& p = ckpt.params;
    detail::BinaryWriter w;
    w.put_bytes(std::string_view(kCheckpointMagic, 4));
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint32_t>(p.d()));
    w.put(static_cast<std::uint32_t>(p.m()));
    w.put(static_cast<std::uint32_t>(ckpt.k));
    w.put(ckpt.theta);
    w.put_string(ckpt.config_digest);
    for (const auto* block : {&p.w_enc.data(), &p.b_enc, &p.w_dec.data(), &p.b_dec}) {
        for (double x : *block) {
            w.put(x);
        }
    }
    return w.release();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
    detail::BinaryReader r(bytes, source);
    if (r.get_bytes(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
        throw FormatError(source, 0, "bad magic, expected \"SAE1\"");
    }
    if (const auto v = r.get<std::uint32_t>("version"); v != kCheckpointVersion) {
        throw FormatError(source, 4, "unsupported version " + std::to_string(v));
    }
    const auto d = r.get<std::uint32_t>("d");
    const auto m = r.get<std::uint32_t>("m");
    Checkpoint c;
    c.k = r.get<std::uint32_t>("k");
    c.theta = r.get<double>("theta");
    c.config_digest = r.get_string("config digest");
    if (d == 0 || m < d) {
        r.fail("invalid shape d=" + std::to_string(d) + " m=" + std::to_string(m));
    }
    const std::uint64_t need = (2ULL * m * d + m + d) * sizeof(double);
    if (r.remaining() != need) {
        r.fail("parameter blocks are " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(need));
    }
    c.params = SaeParams::zeros(d, m);
    for (auto* block : {&c.params.w_enc.data(), &c.params.b_enc, &c.params.w_dec.data(), &c.params.b_dec}) {
        for (double& x : *block) {
            x = r.get<double>("parameters");
        }
    }
    return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    detail::write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::string& path) {
    return decode_checkpoint(detail::read_file_bytes(path), path);
}

void write_loss_log(const std::vector<LossRecord>& log, const std::string& path, const std::string& digest) {
    std::string out;
    if (!digest.empty()) {
        out += "# config_digest=" + digest + "\n";
    }
    out += "step,recon,aux\n";
    char buf[96];
    for (const auto& rec : log) {
        std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g\n", static_cast<unsigned long long>(rec.step), rec.recon,
                      rec.aux);
        out += buf;
    }
    detail::write_file_bytes(path, out);
}

}  // namespace latentir::sae
