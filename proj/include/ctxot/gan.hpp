#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ctxot/config.hpp"
#include "ctxot/featenc.hpp"
#include "ctxot/image.hpp"
#include "ctxot/rng.hpp"
#include "ctxot/tensor.hpp"

namespace ctxot {

struct TrainConfig {
    int epochs = 100;
    int batch = 2;
    double critic_lr = 1e-4;
    double gen_lr = 5e-5;
    int lr_decay_epochs = 50;      // decay every this many epochs
    double lr_decay_factor = 0.1;  // multiply the rates by this
    double rms_rho = 0.9;
    double rms_eps = 1e-8;
    double w_ctx = 50.0;  // transport-cost weight
    double w_gan = 1.0;   // adversarial weight
    double gp_coef = 10.0;
    int n_critic = 1;  // critic steps per generator step
    double bandwidth = 0.5;
    uint64_t seed = 0;
    int image_size = 32;
    // Plumbing: hard cap on total steps (0 = run all epochs) and the
    // training-time augmentation toggle.
    int max_steps = 0;
    bool augment = true;
    uint64_t encoder_seed = EncoderSpec{}.filter_seed;

    void validate() const;
    std::string serialize() const;
    static TrainConfig parse(const std::string& text);
    static TrainConfig load(const std::string& path);

    EncoderSpec encoder_spec() const;
};

// A named parameter blob plus its optimizer accumulator and, for
// spectrally normalized weights, the persistent power-iteration vector.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> rms_v;
    std::vector<double> sn_u;  // empty when the weight is not normalized

    bool spectral() const { return !sn_u.empty(); }
};

class ParamStore {
  public:
    // References stay valid across later add() calls.
    Param& add(const std::string& name, Shape shape, bool spectral_norm = false);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const;
    std::deque<Param>& params() { return params_; }
    const std::deque<Param>& params() const { return params_; }
    uint64_t value_checksum() const;

  private:
    std::deque<Param> params_;
    std::map<std::string, size_t> index_;
};

// Per-tape view of a store: parameters whose name starts with
// `trainable_prefix` bind as tape leaves (cached, so repeated forwards
// share one leaf); everything else is served detached.
class NetBinding {
  public:
    NetBinding(ParamStore& store, Tape& tape, std::string trainable_prefix);
    Tensor get(const std::string& name);
    ParamStore& store() { return store_; }
    const std::vector<std::string>& trainable_names() const { return names_; }
    std::vector<Tensor> trainable();

  private:
    ParamStore& store_;
    Tape& tape_;
    std::string prefix_;
    std::map<std::string, Tensor> cache_;
    std::vector<std::string> names_;
};

// One (or more) power-iteration steps on the state vector, then the
// weight divided by the estimated top singular value. The division runs
// through the tape, so gradients reach the raw weight. A zero matrix is
// returned unchanged (sigma guard at 1e-12).
Tensor spectral_normalize(const Tensor& weight, std::vector<double>& u_state, int iterations = 1);

void init_generator_params(ParamStore& store, Rng& rng);
void init_critic_params(ParamStore& store, Rng& rng);

// U-Net with a residual bottleneck and per-stage channel attention;
// sigmoid head keeps the output in (0, 1). `update_sn` persists the
// power-iteration state (training forwards do, evaluation must not).
Tensor generator_forward(NetBinding& bind, const Tensor& input, bool update_sn);

// Four stride-2 convolutions, global pooling, linear head; returns one
// unbounded score per image ([B]).
Tensor critic_forward(NetBinding& bind, const Tensor& input);

using CriticFn = std::function<Tensor(const Tensor&)>;

// Mean over the batch of (|grad_x critic(x_hat)|_2 - 1)^2 at per-sample
// random interpolates x_hat between real and fake. Differentiable w.r.t.
// the critic parameters (the input gradient is built with the graph on).
Tensor gradient_penalty(Tape& tape, const CriticFn& critic, const Tensor& real,
                        const Tensor& fake, Rng& rng);

struct CriticStepRecord {
    double loss = 0.0;     // wgap + gp_coef * penalty
    double wgap = 0.0;     // E D(f(Y)) - E D(X)
    double penalty = 0.0;
};

struct GeneratorStepRecord {
    double loss = 0.0;  // w_ctx * contextual + w_gan * adversarial
    double contextual = 0.0;
    double adversarial = 0.0;  // -E D(f(Y))
};

CriticStepRecord critic_step(ParamStore& store, const Tensor& real_batch,
                             const Tensor& noisy_batch, const TrainConfig& cfg, Rng& gp_rng,
                             double lr);

GeneratorStepRecord generator_step(ParamStore& store, const Tensor& noisy_batch,
                                   const Encoder& encoder, const TrainConfig& cfg, double lr);

// Versioned binary checkpoint: magic "CTXG", u32 version, config text,
// then named blobs (values, optimizer state, power-iteration vectors).
void save_checkpoint(const std::string& path, const ParamStore& store, const TrainConfig& cfg);
struct Checkpoint {
    ParamStore store;
    TrainConfig cfg;
};
Checkpoint load_checkpoint(const std::string& path);

// Training-time augmentation: seeded flips, right-angle rotation, and
// crop-and-resize with scale in [0.8, 1].
Image augment_image(const Image& img, Rng& rng);

struct TrainResult {
    int steps = 0;
    double last_critic_loss = 0.0;
    double last_ctx = 0.0;
};

// Unpaired training loop: n_critic critic steps then one generator step
// per iteration, learning-rate decay on the epoch schedule, a CSV row per
// step (step,critic_loss,wgap,ctx), and an atomically written checkpoint
// every epoch. Pools must hold images of cfg.image_size.
TrainResult train(const std::vector<Image>& clean_pool, const std::vector<Image>& noisy_pool,
                  const TrainConfig& cfg, const std::string& checkpoint_path,
                  const std::string& loss_csv_path);

// Single deterministic forward pass of the checkpointed generator.
Image enhance(Checkpoint& ckpt, const Image& image);
Image enhance(const std::string& checkpoint_path, const Image& image);

}  // namespace ctxot
