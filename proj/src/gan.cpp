#include "ctxot/gan.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctxot/errors.hpp"
#include "ctxot/otcore.hpp"

namespace ctxot {

// ---- config ----

void TrainConfig::validate() const {
    if (epochs < 1) throw ArgumentError("train config: epochs must be >= 1");
    if (batch < 1) throw ArgumentError("train config: batch must be >= 1");
    if (critic_lr <= 0.0 || gen_lr <= 0.0) {
        throw ArgumentError("train config: learning rates must be positive");
    }
    if (lr_decay_epochs < 1 || lr_decay_factor <= 0.0) {
        throw ArgumentError("train config: decay schedule is invalid");
    }
    if (rms_rho <= 0.0 || rms_rho >= 1.0 || rms_eps <= 0.0) {
        throw ArgumentError("train config: optimizer constants are invalid");
    }
    if (w_ctx < 0.0) throw ArgumentError("train config: w_ctx must be >= 0");
    if (gp_coef < 0.0) throw ArgumentError("train config: gp_coef must be >= 0");
    if (n_critic < 1) throw ArgumentError("train config: n_critic must be >= 1");
    if (bandwidth <= 0.0) throw ArgumentError("train config: bandwidth must be positive");
    if (image_size < 8 || image_size % 8 != 0) {
        throw ArgumentError("train config: image size must be a positive multiple of 8");
    }
    if (max_steps < 0) throw ArgumentError("train config: max_steps must be >= 0");
}

std::string TrainConfig::serialize() const {
    KvConfig kv;
    kv.set_int("epochs", epochs);
    kv.set_int("batch", batch);
    kv.set_double("critic_lr", critic_lr);
    kv.set_double("gen_lr", gen_lr);
    kv.set_int("lr_decay_epochs", lr_decay_epochs);
    kv.set_double("lr_decay_factor", lr_decay_factor);
    kv.set_double("rms_rho", rms_rho);
    kv.set_double("rms_eps", rms_eps);
    kv.set_double("w_ctx", w_ctx);
    kv.set_double("w_gan", w_gan);
    kv.set_double("gp_coef", gp_coef);
    kv.set_int("n_critic", n_critic);
    kv.set_double("bandwidth", bandwidth);
    kv.set_u64("seed", seed);
    kv.set_int("image_size", image_size);
    kv.set_int("max_steps", max_steps);
    kv.set_bool("augment", augment);
    kv.set_u64("encoder_seed", encoder_seed);
    return kv.serialize();
}

TrainConfig TrainConfig::parse(const std::string& text) {
    KvConfig kv = KvConfig::parse(text);
    TrainConfig cfg;
    cfg.epochs = static_cast<int>(kv.get_int_or("epochs", cfg.epochs));
    cfg.batch = static_cast<int>(kv.get_int_or("batch", cfg.batch));
    cfg.critic_lr = kv.get_double_or("critic_lr", cfg.critic_lr);
    cfg.gen_lr = kv.get_double_or("gen_lr", cfg.gen_lr);
    cfg.lr_decay_epochs = static_cast<int>(kv.get_int_or("lr_decay_epochs", cfg.lr_decay_epochs));
    cfg.lr_decay_factor = kv.get_double_or("lr_decay_factor", cfg.lr_decay_factor);
    cfg.rms_rho = kv.get_double_or("rms_rho", cfg.rms_rho);
    cfg.rms_eps = kv.get_double_or("rms_eps", cfg.rms_eps);
    cfg.w_ctx = kv.get_double_or("w_ctx", cfg.w_ctx);
    cfg.w_gan = kv.get_double_or("w_gan", cfg.w_gan);
    cfg.gp_coef = kv.get_double_or("gp_coef", cfg.gp_coef);
    cfg.n_critic = static_cast<int>(kv.get_int_or("n_critic", cfg.n_critic));
    cfg.bandwidth = kv.get_double_or("bandwidth", cfg.bandwidth);
    cfg.seed = kv.get_u64_or("seed", cfg.seed);
    cfg.image_size = static_cast<int>(kv.get_int_or("image_size", cfg.image_size));
    cfg.max_steps = static_cast<int>(kv.get_int_or("max_steps", cfg.max_steps));
    cfg.augment = kv.get_bool_or("augment", cfg.augment);
    cfg.encoder_seed = kv.get_u64_or("encoder_seed", cfg.encoder_seed);
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("train config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

EncoderSpec TrainConfig::encoder_spec() const {
    EncoderSpec spec;
    spec.filter_seed = encoder_seed;
    return spec;
}

// ---- parameters ----

Param& ParamStore::add(const std::string& name, Shape shape, bool spectral_norm) {
    if (index_.count(name)) throw ArgumentError("params: duplicate name " + name);
    Param p;
    p.name = name;
    p.shape = std::move(shape);
    size_t n = shape_numel(p.shape);
    p.value.assign(n, 0.0);
    p.rms_v.assign(n, 0.0);
    if (spectral_norm) {
        size_t rows = p.shape[0];
        p.sn_u.assign(rows, 1.0 / std::sqrt(static_cast<double>(rows)));
    }
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back();
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("params: unknown name " + name);
    return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("params: unknown name " + name);
    return params_[it->second];
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

uint64_t ParamStore::value_checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Param& p : params_) {
        h ^= fnv1a64(p.name.data(), p.name.size());
        h *= 0x100000001b3ull;
        h ^= fnv1a64(p.value.data(), p.value.size() * sizeof(double));
        h *= 0x100000001b3ull;
    }
    return h;
}

NetBinding::NetBinding(ParamStore& store, Tape& tape, std::string trainable_prefix)
    : store_(store), tape_(tape), prefix_(std::move(trainable_prefix)) {
    for (const Param& p : store_.params()) {
        if (p.name.rfind(prefix_, 0) == 0) names_.push_back(p.name);
    }
}

Tensor NetBinding::get(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Param& p = store_.at(name);
    Tensor t;
    if (name.rfind(prefix_, 0) == 0) {
        t = tape_.leaf(p.shape, p.value);
    } else {
        t = Tensor(p.shape, p.value);
    }
    cache_.emplace(name, t);
    return t;
}

std::vector<Tensor> NetBinding::trainable() {
    std::vector<Tensor> out;
    out.reserve(names_.size());
    for (const std::string& n : names_) out.push_back(get(n));
    return out;
}

// ---- spectral normalization ----

Tensor spectral_normalize(const Tensor& weight, std::vector<double>& u_state, int iterations) {
    if (weight.rank() < 2) {
        throw DimensionError("spectral_normalize: weight must have rank >= 2, got shape " +
                             shape_str(weight.shape()));
    }
    if (iterations < 1) throw ArgumentError("spectral_normalize: iterations must be >= 1");
    size_t rows = weight.shape()[0];
    size_t cols = weight.numel() / rows;
    if (u_state.empty()) {
        u_state.assign(rows, 1.0 / std::sqrt(static_cast<double>(rows)));
    }
    if (u_state.size() != rows) {
        throw DimensionError("spectral_normalize: state length " + std::to_string(u_state.size()) +
                             " does not match " + std::to_string(rows) + " rows");
    }

    const double* w = weight.data();
    std::vector<double> u = u_state;
    std::vector<double> v(cols, 0.0);
    for (int it = 0; it < iterations; ++it) {
        for (size_t c = 0; c < cols; ++c) v[c] = 0.0;
        for (size_t r = 0; r < rows; ++r) {
            double ur = u[r];
            const double* wr = w + r * cols;
            for (size_t c = 0; c < cols; ++c) v[c] += wr[c] * ur;
        }
        double vn = 0.0;
        for (size_t c = 0; c < cols; ++c) vn += v[c] * v[c];
        vn = std::sqrt(vn);
        if (vn < 1e-12) return weight;  // zero matrix: leave the weight alone
        for (size_t c = 0; c < cols; ++c) v[c] /= vn;

        for (size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            const double* wr = w + r * cols;
            for (size_t c = 0; c < cols; ++c) acc += wr[c] * v[c];
            u[r] = acc;
        }
        double un = 0.0;
        for (size_t r = 0; r < rows; ++r) un += u[r] * u[r];
        un = std::sqrt(un);
        if (un < 1e-12) return weight;
        for (size_t r = 0; r < rows; ++r) u[r] /= un;
    }
    u_state = u;

    double sigma_val = 0.0;
    for (size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* wr = w + r * cols;
        for (size_t c = 0; c < cols; ++c) acc += wr[c] * v[c];
        sigma_val += u[r] * acc;
    }
    if (sigma_val < 1e-12) return weight;

    // sigma as a tape expression with u, v fixed: gradients reach the
    // raw weight through both the numerator and sigma.
    Tensor w2d = reshape(weight, Shape{rows, cols});
    Tensor ut(Shape{1, rows}, std::vector<double>(u.begin(), u.end()));
    Tensor vt(Shape{cols, 1}, std::vector<double>(v.begin(), v.end()));
    Tensor sigma = reshape(matmul(matmul(ut, w2d), vt), Shape{1});
    return mul(weight, recip(sigma));
}

// ---- networks ----

namespace {

void he_init(Param& p, Rng& rng, size_t fan_in, double gain = 1.0) {
    double std = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : p.value) v = rng.normal(0.0, std);
}

void add_conv(ParamStore& store, Rng& rng, const std::string& name, size_t cout, size_t cin,
              size_t k, bool sn, double gain = 1.0) {
    Param& w = store.add(name + ".w", Shape{cout, cin, k, k}, sn);
    he_init(w, rng, cin * k * k, gain);
    store.add(name + ".b", Shape{cout});
    if (sn) {
        // Converge the power-iteration state on the initial weights; the
        // single per-step iteration then only has to track optimizer-sized
        // drift, keeping the normalized norm near 1 from the first step.
        Tensor wt(w.shape, w.value);
        spectral_normalize(wt, w.sn_u, 400);
    }
}

void add_attention(ParamStore& store, Rng& rng, const std::string& name, size_t ch) {
    size_t mid = std::max<size_t>(1, ch / 8);  // squeeze-excitation reduction 8
    Param& w1 = store.add(name + ".w1", Shape{ch, mid});
    he_init(w1, rng, ch);
    store.add(name + ".b1", Shape{mid});
    Param& w2 = store.add(name + ".w2", Shape{mid, ch});
    he_init(w2, rng, mid);
    store.add(name + ".b2", Shape{ch});
}

constexpr double kLeakySlope = 0.2;

}  // namespace

void init_generator_params(ParamStore& store, Rng& rng) {
    Rng r = rng.substream("generator");
    add_conv(store, r, "g.e1", 16, 3, 3, true);
    add_attention(store, r, "g.e1.ca", 16);
    add_conv(store, r, "g.e2", 32, 16, 3, true);
    add_attention(store, r, "g.e2.ca", 32);
    add_conv(store, r, "g.e3", 64, 32, 3, true);
    add_attention(store, r, "g.e3.ca", 64);
    add_conv(store, r, "g.r1", 64, 64, 3, true);
    add_conv(store, r, "g.r2", 64, 64, 3, true);
    add_conv(store, r, "g.d3", 32, 96, 3, true);
    add_attention(store, r, "g.d3.ca", 32);
    add_conv(store, r, "g.d2", 16, 48, 3, true);
    add_attention(store, r, "g.d2.ca", 16);
    add_conv(store, r, "g.d1", 16, 19, 3, true);
    add_attention(store, r, "g.d1.ca", 16);
    add_conv(store, r, "g.out", 3, 16, 1, true, 0.2);
}

void init_critic_params(ParamStore& store, Rng& rng) {
    Rng r = rng.substream("critic");
    add_conv(store, r, "c.1", 16, 3, 3, false);
    add_conv(store, r, "c.2", 32, 16, 3, false);
    add_conv(store, r, "c.3", 64, 32, 3, false);
    add_conv(store, r, "c.4", 128, 64, 3, false);
    Param& head = store.add("c.head.w", Shape{128, 1});
    he_init(head, r, 128);
    store.add("c.head.b", Shape{1});
}

namespace {

// A few tracking iterations per forward: enough to follow optimizer-sized
// weight drift so the normalized norm stays inside [0.9, 1.05].
constexpr int kSnForwardIters = 5;

Tensor conv_sn(NetBinding& bind, const std::string& name, const Tensor& x, int stride, int pad,
               bool update_sn) {
    Tensor w = bind.get(name + ".w");
    Param& p = bind.store().at(name + ".w");
    std::vector<double> u = p.sn_u;
    Tensor wn = spectral_normalize(w, u, kSnForwardIters);
    if (update_sn) p.sn_u = u;
    return add_channel_bias(conv2d(x, wn, stride, pad), bind.get(name + ".b"));
}

Tensor attention_gate(NetBinding& bind, const std::string& name, const Tensor& x) {
    Tensor squeezed = global_average_pool(x);  // [B,C]
    Tensor z = leaky_relu(add_rowvec(matmul(squeezed, bind.get(name + ".w1")),
                                     bind.get(name + ".b1")),
                          kLeakySlope);
    Tensor gate = sigmoid(add_rowvec(matmul(z, bind.get(name + ".w2")), bind.get(name + ".b2")));
    return mul(x, broadcast_hw(gate, x.shape()[2], x.shape()[3]));
}

}  // namespace

Tensor generator_forward(NetBinding& bind, const Tensor& input, bool update_sn) {
    if (input.rank() != 4 || input.shape()[1] != 3) {
        throw DimensionError("generator: expected a [B,3,H,W] batch, got shape " +
                             shape_str(input.shape()));
    }
    if (input.shape()[2] % 8 != 0 || input.shape()[3] % 8 != 0) {
        throw DimensionError("generator: spatial extents must be multiples of 8, got " +
                             shape_str(input.shape()));
    }
    Tensor e1 = attention_gate(bind, "g.e1.ca",
                               leaky_relu(conv_sn(bind, "g.e1", input, 2, 1, update_sn), kLeakySlope));
    Tensor e2 = attention_gate(bind, "g.e2.ca",
                               leaky_relu(conv_sn(bind, "g.e2", e1, 2, 1, update_sn), kLeakySlope));
    Tensor e3 = attention_gate(bind, "g.e3.ca",
                               leaky_relu(conv_sn(bind, "g.e3", e2, 2, 1, update_sn), kLeakySlope));

    Tensor mid = leaky_relu(conv_sn(bind, "g.r1", e3, 1, 1, update_sn), kLeakySlope);
    Tensor bottleneck = add(e3, conv_sn(bind, "g.r2", mid, 1, 1, update_sn));

    Tensor d3 = attention_gate(
        bind, "g.d3.ca",
        leaky_relu(conv_sn(bind, "g.d3", concat_channels(upsample_nearest(bottleneck, 2), e2), 1,
                           1, update_sn),
                   kLeakySlope));
    Tensor d2 = attention_gate(
        bind, "g.d2.ca",
        leaky_relu(
            conv_sn(bind, "g.d2", concat_channels(upsample_nearest(d3, 2), e1), 1, 1, update_sn),
            kLeakySlope));
    Tensor d1 = attention_gate(
        bind, "g.d1.ca",
        leaky_relu(
            conv_sn(bind, "g.d1", concat_channels(upsample_nearest(d2, 2), input), 1, 1, update_sn),
            kLeakySlope));
    return sigmoid(conv_sn(bind, "g.out", d1, 1, 0, update_sn));
}

Tensor critic_forward(NetBinding& bind, const Tensor& input) {
    if (input.rank() != 4 || input.shape()[1] != 3) {
        throw DimensionError("critic: expected a [B,3,H,W] batch, got shape " +
                             shape_str(input.shape()));
    }
    auto conv_plain = [&](const std::string& name, const Tensor& x) {
        return leaky_relu(
            add_channel_bias(conv2d(x, bind.get(name + ".w"), 2, 1), bind.get(name + ".b")),
            kLeakySlope);
    };
    Tensor h = conv_plain("c.1", input);
    h = conv_plain("c.2", h);
    h = conv_plain("c.3", h);
    h = conv_plain("c.4", h);
    Tensor pooled = global_average_pool(h);  // [B,128]
    Tensor score = add_rowvec(matmul(pooled, bind.get("c.head.w")), bind.get("c.head.b"));
    return reshape(score, Shape{input.shape()[0]});
}

// ---- losses ----

Tensor gradient_penalty(Tape& tape, const CriticFn& critic, const Tensor& real,
                        const Tensor& fake, Rng& rng) {
    if (real.shape() != fake.shape()) {
        throw DimensionError("gradient_penalty: batch shapes differ (" + shape_str(real.shape()) +
                             " vs " + shape_str(fake.shape()) + ")");
    }
    if (real.rank() < 2) throw DimensionError("gradient_penalty: expected batched inputs");
    size_t batch = real.shape()[0];
    size_t per = real.numel() / batch;

    std::vector<double> mixed(real.numel());
    const double* pr = real.data();
    const double* pf = fake.data();
    for (size_t b = 0; b < batch; ++b) {
        double eps = rng.uniform();
        for (size_t i = 0; i < per; ++i) {
            mixed[b * per + i] = eps * pr[b * per + i] + (1.0 - eps) * pf[b * per + i];
        }
    }
    Tensor interp = tape.leaf(real.shape(), std::move(mixed));
    Tensor scores = critic(interp);
    Tensor input_grad = tape.gradients(sum(scores), {interp}, /*create_graph=*/true)[0];
    Tensor per_sample_sq = sum_axis(reshape(square(input_grad), Shape{batch, per}), 1);
    Tensor norm = sqrt_eps(per_sample_sq, 1e-12);
    return mean(square(add_scalar(norm, -1.0)));
}

namespace {

void rmsprop_update(ParamStore& store, const std::vector<std::string>& names,
                    const std::vector<Tensor>& grads, double lr, double rho, double eps) {
    for (size_t i = 0; i < names.size(); ++i) {
        Param& p = store.at(names[i]);
        const double* g = grads[i].data();
        for (size_t k = 0; k < p.value.size(); ++k) {
            p.rms_v[k] = rho * p.rms_v[k] + (1.0 - rho) * g[k] * g[k];
            p.value[k] -= lr * g[k] / (std::sqrt(p.rms_v[k]) + eps);
        }
    }
}

void check_batch(const Tensor& t, const char* what) {
    if (!t.defined() || t.rank() != 4 || t.shape()[0] < 1) {
        throw ArgumentError(std::string("training: empty or malformed ") + what + " batch");
    }
}

}  // namespace

CriticStepRecord critic_step(ParamStore& store, const Tensor& real_batch,
                             const Tensor& noisy_batch, const TrainConfig& cfg, Rng& gp_rng,
                             double lr) {
    check_batch(real_batch, "real");
    check_batch(noisy_batch, "noisy");

    // Fakes from the current generator, held constant for this step.
    Tensor fake;
    {
        Tape gen_tape;
        Tape::NoRecord pause(gen_tape);
        NetBinding gen_bind(store, gen_tape, "g.");
        fake = generator_forward(gen_bind, noisy_batch.detached(), /*update_sn=*/false).detached();
    }

    Tape tape;
    NetBinding bind(store, tape, "c.");
    Tensor d_real = critic_forward(bind, real_batch.detached());
    Tensor d_fake = critic_forward(bind, fake);
    Tensor wgap = sub(mean(d_fake), mean(d_real));
    Tensor penalty = gradient_penalty(
        tape, [&](const Tensor& x) { return critic_forward(bind, x); }, real_batch.detached(),
        fake, gp_rng);
    Tensor loss = add(wgap, scale(penalty, cfg.gp_coef));

    std::vector<Tensor> grads = tape.gradients(loss, bind.trainable());
    rmsprop_update(store, bind.trainable_names(), grads, lr, cfg.rms_rho, cfg.rms_eps);

    CriticStepRecord rec;
    rec.wgap = wgap.value();
    rec.penalty = penalty.value();
    rec.loss = loss.value();
    return rec;
}

GeneratorStepRecord generator_step(ParamStore& store, const Tensor& noisy_batch,
                                   const Encoder& encoder, const TrainConfig& cfg, double lr) {
    check_batch(noisy_batch, "noisy");
    size_t batch = noisy_batch.shape()[0];

    Tape tape;
    NetBinding bind(store, tape, "g.");
    Tensor noisy = noisy_batch.detached();
    Tensor fake = generator_forward(bind, noisy, /*update_sn=*/true);

    Tensor ctx_total;
    for (size_t b = 0; b < batch; ++b) {
        FeatureSet ref = encoder.encode(slice_axis(noisy, 0, b, b + 1));
        FeatureSet out = encoder.encode(slice_axis(fake, 0, b, b + 1));
        Tensor c = contextual_cost(ref, out, cfg.bandwidth);
        ctx_total = ctx_total.defined() ? add(ctx_total, c) : c;
    }
    Tensor ctx = div_scalar(ctx_total, static_cast<double>(batch));
    Tensor adv = neg(mean(critic_forward(bind, fake)));
    Tensor loss = add(scale(ctx, cfg.w_ctx), scale(adv, cfg.w_gan));

    std::vector<Tensor> grads = tape.gradients(loss, bind.trainable());
    rmsprop_update(store, bind.trainable_names(), grads, lr, cfg.rms_rho, cfg.rms_eps);

    GeneratorStepRecord rec;
    rec.contextual = ctx.value();
    rec.adversarial = adv.value();
    rec.loss = cfg.w_ctx * rec.contextual + cfg.w_gan * rec.adversarial;
    return rec;
}

// ---- checkpoint ----

namespace {

constexpr char kCkptMagic[4] = {'C', 'T', 'X', 'G'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_blob(std::string& out, const std::string& name, const Shape& shape,
              const std::vector<double>& data) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(shape.size()));
    for (size_t e : shape) put_u32(out, static_cast<uint32_t>(e));
    size_t off = out.size();
    out.resize(off + data.size() * sizeof(double));
    std::memcpy(out.data() + off, data.data(), data.size() * sizeof(double));
}

struct Reader {
    const unsigned char* p;
    size_t n;
    size_t pos = 0;
    const std::string& path;

    void need(size_t k, const char* what) {
        if (pos + k > n) {
            throw FormatError("checkpoint: truncated " + std::string(what) + " in " + path);
        }
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = static_cast<uint32_t>(p[pos]) | (static_cast<uint32_t>(p[pos + 1]) << 8) |
                     (static_cast<uint32_t>(p[pos + 2]) << 16) |
                     (static_cast<uint32_t>(p[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    std::string str(size_t k, const char* what) {
        need(k, what);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
    std::vector<double> doubles(size_t count, const char* what) {
        need(count * sizeof(double), what);
        std::vector<double> v(count);
        std::memcpy(v.data(), p + pos, count * sizeof(double));
        pos += count * sizeof(double);
        return v;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store, const TrainConfig& cfg) {
    std::string out;
    out.append(kCkptMagic, 4);
    put_u32(out, kCkptVersion);
    std::string cfg_text = cfg.serialize();
    put_u32(out, static_cast<uint32_t>(cfg_text.size()));
    out.append(cfg_text);

    uint32_t blobs = 0;
    for (const Param& p : store.params()) blobs += p.spectral() ? 3 : 2;
    put_u32(out, blobs);
    for (const Param& p : store.params()) {
        put_blob(out, "p." + p.name, p.shape, p.value);
        put_blob(out, "v." + p.name, p.shape, p.rms_v);
        if (p.spectral()) put_blob(out, "u." + p.name, Shape{p.sn_u.size()}, p.sn_u);
    }

    // Atomic: write aside, then rename into place.
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("checkpoint: cannot write " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("checkpoint: write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint: cannot move " + tmp + " to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    Reader r{bytes.data(), bytes.size(), 0, path};
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic in " + path);
    }
    r.pos = 4;
    uint32_t version = r.u32("version");
    if (version != kCkptVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " in " +
                          path);
    }
    uint32_t cfg_len = r.u32("config length");
    TrainConfig cfg = TrainConfig::parse(r.str(cfg_len, "config"));

    Checkpoint ckpt;
    ckpt.cfg = cfg;
    Rng dummy(0);
    init_generator_params(ckpt.store, dummy);
    init_critic_params(ckpt.store, dummy);

    uint32_t blobs = r.u32("blob count");
    size_t value_blobs = 0;
    for (uint32_t i = 0; i < blobs; ++i) {
        uint32_t name_len = r.u32("name length");
        std::string name = r.str(name_len, "name");
        uint32_t rank = r.u32("rank");
        Shape shape;
        size_t count = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            shape.push_back(r.u32("extent"));
            count *= shape.back();
        }
        std::vector<double> data = r.doubles(count, "payload");
        for (double v : data) {
            if (!std::isfinite(v)) {
                throw FormatError("checkpoint: non-finite value in blob " + name);
            }
        }
        if (name.size() < 3 || name[1] != '.') {
            throw FormatError("checkpoint: malformed blob name " + name);
        }
        std::string param_name = name.substr(2);
        if (!ckpt.store.has(param_name)) {
            throw FormatError("checkpoint: unknown parameter " + param_name + " in " + path);
        }
        Param& p = ckpt.store.at(param_name);
        switch (name[0]) {
            case 'p':
                if (shape != p.shape) {
                    throw FormatError("checkpoint: shape mismatch for " + param_name);
                }
                p.value = std::move(data);
                ++value_blobs;
                break;
            case 'v':
                if (data.size() != p.rms_v.size()) {
                    throw FormatError("checkpoint: optimizer state mismatch for " + param_name);
                }
                p.rms_v = std::move(data);
                break;
            case 'u':
                if (!p.spectral() || data.size() != p.sn_u.size()) {
                    throw FormatError("checkpoint: normalization state mismatch for " + param_name);
                }
                p.sn_u = std::move(data);
                break;
            default:
                throw FormatError("checkpoint: unknown blob kind in " + name);
        }
    }
    if (r.pos != bytes.size()) {
        throw FormatError("checkpoint: trailing bytes in " + path);
    }
    if (value_blobs != ckpt.store.params().size()) {
        throw FormatError("checkpoint: " + path + " holds " + std::to_string(value_blobs) +
                          " parameter blobs, expected " +
                          std::to_string(ckpt.store.params().size()));
    }
    return ckpt;
}

// ---- training loop ----

Image augment_image(const Image& img, Rng& rng) {
    Image out = img;
    size_t n = out.height;
    auto flip_h = [&](Image& m) {
        for (size_t y = 0; y < m.height; ++y) {
            for (size_t x = 0; x < m.width / 2; ++x) {
                for (size_t c = 0; c < m.channels; ++c) {
                    std::swap(m.at(y, x, c), m.at(y, m.width - 1 - x, c));
                }
            }
        }
    };
    auto flip_v = [&](Image& m) {
        for (size_t y = 0; y < m.height / 2; ++y) {
            for (size_t x = 0; x < m.width; ++x) {
                for (size_t c = 0; c < m.channels; ++c) {
                    std::swap(m.at(y, x, c), m.at(m.height - 1 - y, x, c));
                }
            }
        }
    };
    auto rot90 = [&](const Image& m) {
        Image r(m.width, m.height, m.channels);
        for (size_t y = 0; y < m.height; ++y) {
            for (size_t x = 0; x < m.width; ++x) {
                for (size_t c = 0; c < m.channels; ++c) {
                    r.at(x, m.height - 1 - y, c) = m.at(y, x, c);
                }
            }
        }
        return r;
    };

    if (rng.coin()) flip_h(out);
    if (rng.coin()) flip_v(out);
    int quarter = static_cast<int>(rng.uniform_int(0, 3));
    for (int q = 0; q < quarter; ++q) out = rot90(out);

    double scl = rng.uniform(0.8, 1.0);
    size_t side = std::max<size_t>(8, static_cast<size_t>(std::lround(scl * n)));
    if (side < n) {
        size_t y0 = rng.index(n - side + 1);
        size_t x0 = rng.index(n - side + 1);
        Image crop(side, side, out.channels);
        for (size_t y = 0; y < side; ++y) {
            for (size_t x = 0; x < side; ++x) {
                for (size_t c = 0; c < out.channels; ++c) {
                    crop.at(y, x, c) = out.at(y0 + y, x0 + x, c);
                }
            }
        }
        out = resize_bilinear(crop, n, n);
        out.clamp01();
    }
    return out;
}

namespace {

Tensor sample_batch(const std::vector<Image>& pool, int batch, Rng& rng, bool augment,
                    Rng& aug_rng) {
    std::vector<Image> picked;
    picked.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        const Image& img = pool[rng.index(pool.size())];
        picked.push_back(augment ? augment_image(img, aug_rng) : img);
    }
    return images_to_batch(picked);
}

// Converged power method on the raw values; training uses it to verify
// post-normalization weights stay near unit spectral norm.
double top_singular_value(const std::vector<double>& w, size_t rows, size_t cols) {
    std::vector<double> u(rows, 1.0 / std::sqrt(static_cast<double>(rows)));
    std::vector<double> v(cols, 0.0);
    double sigma = 0.0;
    for (int it = 0; it < 200; ++it) {
        for (size_t c = 0; c < cols; ++c) v[c] = 0.0;
        for (size_t r = 0; r < rows; ++r) {
            for (size_t c = 0; c < cols; ++c) v[c] += w[r * cols + c] * u[r];
        }
        double vn = 0.0;
        for (double x : v) vn += x * x;
        vn = std::sqrt(vn);
        if (vn < 1e-15) return 0.0;
        for (double& x : v) x /= vn;
        for (size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * v[c];
            u[r] = acc;
        }
        double un = 0.0;
        for (double x : u) un += x * x;
        un = std::sqrt(un);
        if (un < 1e-15) return 0.0;
        for (double& x : u) x /= un;
        if (std::abs(un - sigma) < 1e-12 * std::max(1.0, un)) {
            sigma = un;
            break;
        }
        sigma = un;
    }
    return sigma;
}

void verify_generator_norms(const ParamStore& store) {
    for (const Param& p : store.params()) {
        if (!p.spectral()) continue;
        size_t rows = p.shape[0];
        size_t cols = shape_numel(p.shape) / rows;
        std::vector<double> u = p.sn_u;
        std::vector<double> w = p.value;
        // Normalize the same way the forward pass does.
        Tensor wt(p.shape, w);
        Tensor wn = spectral_normalize(wt, u, kSnForwardIters);
        double sigma = top_singular_value(wn.values(), rows, cols);
        if (sigma < 0.9 || sigma > 1.05) {
            throw Error("training: normalized spectral norm of " + p.name + " drifted to " +
                        std::to_string(sigma));
        }
    }
}

}  // namespace

TrainResult train(const std::vector<Image>& clean_pool, const std::vector<Image>& noisy_pool,
                  const TrainConfig& cfg, const std::string& checkpoint_path,
                  const std::string& loss_csv_path) {
    cfg.validate();
    if (clean_pool.empty() || noisy_pool.empty()) {
        throw ArgumentError("training: both image pools must be non-empty");
    }
    size_t side = static_cast<size_t>(cfg.image_size);
    for (const std::vector<Image>* pool : {&clean_pool, &noisy_pool}) {
        for (const Image& img : *pool) {
            if (img.height != side || img.width != side || img.channels != 3) {
                throw DimensionError("training: pool images must be 3-channel " +
                                     std::to_string(side) + "x" + std::to_string(side));
            }
        }
    }

    Rng root(cfg.seed);
    Rng rng_init = root.substream("init");
    Rng rng_data = root.substream("data");
    Rng rng_aug = root.substream("augment");
    Rng rng_gp = root.substream("penalty");

    ParamStore store;
    init_generator_params(store, rng_init);
    init_critic_params(store, rng_init);

    Encoder encoder(cfg.encoder_spec());

    int steps_per_epoch = static_cast<int>(
        std::max<size_t>(1, noisy_pool.size() / static_cast<size_t>(cfg.batch)));
    long total = static_cast<long>(cfg.epochs) * steps_per_epoch;
    if (cfg.max_steps > 0) total = std::min<long>(total, cfg.max_steps);

    std::ofstream csv(loss_csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("training: cannot write " + loss_csv_path);
    csv << "step,critic_loss,wgap,ctx\n";

    TrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
        double decay = std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_epochs);
        double critic_lr = cfg.critic_lr * decay;
        double gen_lr = cfg.gen_lr * decay;

        for (int s = 0; s < steps_per_epoch && step < total; ++s) {
            CriticStepRecord cr;
            for (int k = 0; k < cfg.n_critic; ++k) {
                Tensor real = sample_batch(clean_pool, cfg.batch, rng_data, cfg.augment, rng_aug);
                Tensor noisy = sample_batch(noisy_pool, cfg.batch, rng_data, cfg.augment, rng_aug);
                cr = critic_step(store, real, noisy, cfg, rng_gp, critic_lr);
            }
            Tensor noisy = sample_batch(noisy_pool, cfg.batch, rng_data, cfg.augment, rng_aug);
            GeneratorStepRecord gr = generator_step(store, noisy, encoder, cfg, gen_lr);

            if (!std::isfinite(cr.loss) || !std::isfinite(gr.loss)) {
                throw Error("training: non-finite loss at step " + std::to_string(step) +
                            " (critic=" + std::to_string(cr.loss) +
                            ", wgap=" + std::to_string(cr.wgap) +
                            ", ctx=" + std::to_string(gr.contextual) + ")");
            }
            char row[160];
            std::snprintf(row, sizeof(row), "%ld,%.10g,%.10g,%.10g\n", step, cr.loss, cr.wgap,
                          gr.contextual);
            csv << row;
            result.last_critic_loss = cr.loss;
            result.last_ctx = gr.contextual;
            ++step;
        }
        verify_generator_norms(store);
        save_checkpoint(checkpoint_path, store, cfg);
    }
    save_checkpoint(checkpoint_path, store, cfg);
    if (!csv) throw IoError("training: write failed for " + loss_csv_path);
    result.steps = static_cast<int>(step);
    return result;
}

Image enhance(Checkpoint& ckpt, const Image& image) {
    if (image.height % 8 != 0 || image.width % 8 != 0) {
        throw DimensionError("enhance: image extents must be multiples of 8, got " +
                             std::to_string(image.height) + "x" + std::to_string(image.width));
    }
    Tensor x = image_to_tensor(image);
    Tape tape;
    Tape::NoRecord pause(tape);
    NetBinding bind(ckpt.store, tape, "g.");
    Tensor out = generator_forward(bind, x.detached(), /*update_sn=*/false);
    Image result = tensor_to_image(out);
    result.clamp01();
    return result;
}

Image enhance(const std::string& checkpoint_path, const Image& image) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    return enhance(ckpt, image);
}

}  // namespace ctxot
