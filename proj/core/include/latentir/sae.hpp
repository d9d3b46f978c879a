#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentir/ingest.hpp"
#include "latentir/matrix.hpp"
#include "latentir/types.hpp"

namespace latentir::sae {

/// BatchTopK sparse autoencoder hyperparameters.
///
/// The defaults are the full-scale training recipe (AdamW, lr 5e-5, batch 4096,
/// 100 epochs, aux weight 1/16, 20-step dead window, 2k aux latents). Desk-scale
/// runs override lr, batch_size and epochs.
struct SaeConfig {
    std::size_t d = 0;
    std::size_t m = 0;
    std::size_t k = 32;
    double lambda = 0.0625;
    double lr = 5e-5;
    std::size_t batch_size = 4096;
    std::size_t epochs = 100;
    std::size_t dead_window = 20;
    /// 0 selects 2 * k.
    std::size_t aux_width = 0;
    std::uint64_t seed = 0;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 6e-10;
    double weight_decay = 0.0;

    [[nodiscard]] std::size_t effective_aux_width() const noexcept { return aux_width == 0 ? 2 * k : aux_width; }

    /// Throws ValidationError unless m >= d, 1 <= k < m, lambda >= 0, lr > 0, batch_size >= 1.
    void validate() const;

    /// m = 32 d with the remaining fields at their defaults.
    [[nodiscard]] static SaeConfig with_dims(std::size_t d, std::size_t k);
};

/// Encoder and decoder weights. Rows of `w_dec` are the dictionary atoms.
/// The same shape doubles as the gradient and optimizer-moment container.
struct SaeParams {
    Matrix w_enc;                 // m x d
    std::vector<double> b_enc;    // m
    Matrix w_dec;                 // m x d
    std::vector<double> b_dec;    // d

    [[nodiscard]] std::size_t d() const noexcept { return w_enc.cols(); }
    [[nodiscard]] std::size_t m() const noexcept { return w_enc.rows(); }

    /// Zero-filled params of the given shape.
    [[nodiscard]] static SaeParams zeros(std::size_t d, std::size_t m);

    bool operator==(const SaeParams&) const = default;
};

struct LossRecord {
    std::uint64_t step = 0;
    double recon = 0.0;
    double aux = 0.0;

    bool operator==(const LossRecord&) const = default;
};

struct TrainState {
    std::uint64_t step = 0;
    std::vector<std::uint32_t> steps_since_fire;
    /// Running mean of per-batch smallest surviving activation.
    double theta = 0.0;
    std::uint64_t theta_batches = 0;
    SaeParams moment1;
    SaeParams moment2;
    std::vector<LossRecord> loss_log;

    [[nodiscard]] static TrainState fresh(std::size_t d, std::size_t m);
};

struct LossTerms {
    double recon = 0.0;  // mean over items of ||h - h_hat||^2
    double aux = 0.0;    // mean over items of ||residual - aux reconstruction||^2 (0 for rows without aux latents)
    double total = 0.0;  // recon + lambda * aux
};

/// Latents that carry gradient in one step, per batch row (sorted ascending).
/// `active` comes from BatchTopK; `aux` are the dead latents picked by the aux term.
struct Selection {
    std::vector<std::vector<std::uint32_t>> active;
    std::vector<std::vector<std::uint32_t>> aux;
};

/// W_dec rows uniform on the unit sphere, W_enc a copy of W_dec, b_enc = 0,
/// b_dec = column mean of `sample` when given.
[[nodiscard]] SaeParams init_params(const SaeConfig& config, const Matrix* sample = nullptr);

/// Row i = W_enc h_i + b_enc.
[[nodiscard]] Matrix encode_pre(const SaeParams& params, const Matrix& batch);

/// Rectifies, then keeps the n*k largest entries of the whole batch (ties to the lower
/// flat index). Everything else becomes 0. Throws ValidationError when k >= m or k == 0.
[[nodiscard]] Matrix batch_topk_mask(const Matrix& pre, std::size_t k);

/// Smallest surviving (positive) activation of a masked batch, if any survived.
[[nodiscard]] std::optional<double> smallest_survivor(const Matrix& masked);

/// Folds each masked batch's smallest survivor into the running mean held by `state`
/// and returns the updated theta. Throws ValidationError when no batch has been observed.
double calibrate_theta(TrainState& state, std::span<const Matrix> masked_batches);

/// Every latent whose pre-activation exceeds theta (and 0).
[[nodiscard]] SparseCode encode_infer(const SaeParams& params, std::span<const double> h, double theta,
                                      std::string origin_id = {});

/// b_dec + sum_i value_i * W_dec[index_i]. Throws ValidationError on out-of-range index.
[[nodiscard]] std::vector<double> decode(const SaeParams& params, const SparseCode& code);

/// Auxiliary dead-latent reconstruction: per row, the `aux_width` dead latents with the
/// largest positive pre-activations reconstruct `residual` through W_dec (no bias).
/// `loss` is the batch mean squared error; gradients are w.r.t. `pre` and W_dec, with the
/// residual held constant. Rows without an eligible dead latent add nothing, so the loss
/// is zero when no latent is dead.
struct AuxTerm {
    double loss = 0.0;
    Matrix grad_pre;
    Matrix grad_w_dec;
    std::vector<std::vector<std::uint32_t>> selected;
};
[[nodiscard]] AuxTerm aux_term(const SaeParams& params, const Matrix& pre, const Matrix& residual,
                               const std::vector<bool>& dead, std::size_t aux_width);

/// Chooses the latents of one training step: BatchTopK survivors and aux latents.
[[nodiscard]] Selection select_latents(const Matrix& pre, std::size_t k, const std::vector<bool>& dead,
                                       std::size_t aux_width);

/// Total loss for a fixed selection. The aux term reconstructs the main residual with
/// gradient stopped through it; `aux_target` pins that residual explicitly (finite-difference
/// checks freeze it at the unperturbed params). When `grad` is non-null it receives the
/// analytic gradient of `total` with respect to every parameter.
LossTerms evaluate_loss(const SaeParams& params, const Matrix& batch, const Selection& selection,
                        double lambda, SaeParams* grad = nullptr, const Matrix* aux_target = nullptr);

/// h - h_hat for each row under a fixed selection (the aux-loss target).
[[nodiscard]] Matrix main_residual(const SaeParams& params, const Matrix& batch, const Selection& selection);

/// Loss of `batch` with selection recomputed from the current params and dead set.
[[nodiscard]] LossTerms batch_loss(const SaeParams& params, const TrainState& state, const Matrix& batch,
                                   const SaeConfig& config);

/// One AdamW step on `batch`; renormalizes decoder rows, updates dead counters and theta.
/// Throws NumericError on a non-finite loss.
LossTerms train_step(SaeParams& params, TrainState& state, const Matrix& batch, const SaeConfig& config);

struct FitResult {
    SaeParams params;
    TrainState state;
};

/// Trains for config.epochs over seeded shuffles of `data`, then recalibrates theta by a
/// pass over the data with the final params. Pure in (data, config).
[[nodiscard]] FitResult fit(const Matrix& data, const SaeConfig& config);

/// mean ||h - h_hat||^2 / mean ||h - mean(H)||^2. Throws ValidationError on shape mismatch
/// or zero-variance H.
[[nodiscard]] double nmse(const Matrix& original, const Matrix& reconstructed);

[[nodiscard]] Matrix to_matrix(const ingest::EmbeddingStore& store);

/// encode_infer for every row.
[[nodiscard]] std::vector<SparseCode> encode_store(const SaeParams& params, double theta,
                                                   const ingest::EmbeddingStore& store);

/// "SAE1" checkpoint: magic | version u32 | d u32 | m u32 | k u32 | theta f64 |
/// digest string | W_enc | b_enc | W_dec | b_dec (all f64, row-major).
struct Checkpoint {
    SaeParams params;
    std::size_t k = 0;
    double theta = 0.0;
    std::string config_digest;

    bool operator==(const Checkpoint&) const = default;
};
[[nodiscard]] std::string encode_checkpoint(const Checkpoint& ckpt);
[[nodiscard]] Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source);
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
[[nodiscard]] Checkpoint read_checkpoint(const std::string& path);

/// `step,recon,aux` rows, preceded by a `# config_digest=` comment when a digest is given.
void write_loss_log(const std::vector<LossRecord>& log, const std::string& path, const std::string& digest);

}  // namespace latentir::sae
