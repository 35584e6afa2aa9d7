#include "kneespot/soh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace kneespot {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Flat-vector offsets for one recurrent layer: input weights (4H x I, gate
/// rows ordered input/forget/cell/output), recurrent weights (4H x H), bias.
struct LayerSpec {
    std::size_t input = 0;
    std::size_t hidden = 0;
    std::size_t wx = 0;
    std::size_t wh = 0;
    std::size_t bias = 0;
};

struct NetSpec {
    std::vector<LayerSpec> layers;
    std::size_t dense_size = 0;
    std::size_t dense_w = 0;
    std::size_t dense_b = 0;
    std::size_t head_w = 0;
    std::size_t head_b = 0;
    std::size_t total = 0;

    static NetSpec build(const RegressorConfig& cfg) {
        NetSpec spec;
        std::size_t offset = 0;
        std::size_t input = 1; // one scaled warped index per time step
        for (std::size_t hidden : cfg.lstm_layer_sizes) {
            LayerSpec layer;
            layer.input = input;
            layer.hidden = hidden;
            layer.wx = offset;
            offset += 4 * hidden * input;
            layer.wh = offset;
            offset += 4 * hidden * hidden;
            layer.bias = offset;
            offset += 4 * hidden;
            spec.layers.push_back(layer);
            input = hidden;
        }
        spec.dense_size = cfg.dense_size;
        spec.dense_w = offset;
        offset += cfg.dense_size * input;
        spec.dense_b = offset;
        offset += cfg.dense_size;
        spec.head_w = offset;
        offset += cfg.dense_size;
        spec.head_b = offset;
        offset += 1;
        spec.total = offset;
        return spec;
    }
};

/// Everything the backward pass needs from one cycle's forward pass.
/// Per layer, each vector holds T x H values, time-major.
struct LayerTrace {
    std::vector<double> gate_i, gate_f, gate_g, gate_o;
    std::vector<double> cell, cell_tanh, hidden;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    std::vector<double> dense_out; // post-tanh activations
    double output = 0.0;
};

double forward(const double* w, const NetSpec& spec, const std::vector<double>& x,
               ForwardTrace* trace) {
    const std::size_t steps = x.size();
    if (trace) {
        trace->layers.assign(spec.layers.size(), {});
        for (std::size_t l = 0; l < spec.layers.size(); ++l) {
            const std::size_t size = steps * spec.layers[l].hidden;
            LayerTrace& t = trace->layers[l];
            t.gate_i.resize(size);
            t.gate_f.resize(size);
            t.gate_g.resize(size);
            t.gate_o.resize(size);
            t.cell.resize(size);
            t.cell_tanh.resize(size);
            t.hidden.resize(size);
        }
    }

    std::vector<std::vector<double>> h(spec.layers.size());
    std::vector<std::vector<double>> c(spec.layers.size());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        h[l].assign(spec.layers[l].hidden, 0.0);
        c[l].assign(spec.layers[l].hidden, 0.0);
    }

    std::vector<double> input;
    std::vector<double> staged; // h_t is built here so the j-loop keeps reading h_{t-1}
    for (std::size_t t = 0; t < steps; ++t) {
        input.assign(1, x[t]);
        for (std::size_t l = 0; l < spec.layers.size(); ++l) {
            const LayerSpec& layer = spec.layers[l];
            const std::size_t H = layer.hidden;
            const std::size_t I = layer.input;
            staged.resize(H);
            for (std::size_t j = 0; j < H; ++j) {
                double pre[4];
                for (int gate = 0; gate < 4; ++gate) {
                    const std::size_t row = std::size_t(gate) * H + j;
                    double acc = w[layer.bias + row];
                    const double* wx = w + layer.wx + row * I;
                    for (std::size_t k = 0; k < I; ++k) acc += wx[k] * input[k];
                    const double* wh = w + layer.wh + row * H;
                    const double* hp = h[l].data();
                    for (std::size_t k = 0; k < H; ++k) acc += wh[k] * hp[k];
                    pre[gate] = acc;
                }
                const double gi = sigmoid(pre[0]);
                const double gf = sigmoid(pre[1]);
                const double gg = std::tanh(pre[2]);
                const double go = sigmoid(pre[3]);
                const double cell = gf * c[l][j] + gi * gg;
                const double cell_tanh = std::tanh(cell);
                c[l][j] = cell;
                staged[j] = go * cell_tanh;
                if (trace) {
                    LayerTrace& lt = trace->layers[l];
                    const std::size_t at = t * H + j;
                    lt.gate_i[at] = gi;
                    lt.gate_f[at] = gf;
                    lt.gate_g[at] = gg;
                    lt.gate_o[at] = go;
                    lt.cell[at] = cell;
                    lt.cell_tanh[at] = cell_tanh;
                    lt.hidden[at] = staged[j];
                }
            }
            h[l].swap(staged);
            input = h[l];
        }
    }

    const std::size_t H_last = spec.layers.back().hidden;
    const std::size_t D = spec.dense_size;
    std::vector<double> dense(D);
    for (std::size_t j = 0; j < D; ++j) {
        double acc = w[spec.dense_b + j];
        const double* row = w + spec.dense_w + j * H_last;
        for (std::size_t k = 0; k < H_last; ++k) acc += row[k] * h.back()[k];
        dense[j] = std::tanh(acc);
    }
    double y = w[spec.head_b];
    for (std::size_t j = 0; j < D; ++j) y += w[spec.head_w + j] * dense[j];
    if (trace) {
        trace->dense_out = dense;
        trace->output = y;
    }
    return y;
}

/// Backpropagation through time for one cycle; accumulates into `grad`.
void backward(const double* w, const NetSpec& spec, const std::vector<double>& x,
              const ForwardTrace& trace, double dloss_dy, double* grad) {
    const std::size_t steps = x.size();
    const std::size_t L = spec.layers.size();
    const std::size_t H_last = spec.layers.back().hidden;
    const std::size_t D = spec.dense_size;

    // Head and dense layer.
    grad[spec.head_b] += dloss_dy;
    std::vector<double> dh_final(H_last, 0.0);
    for (std::size_t j = 0; j < D; ++j) {
        grad[spec.head_w + j] += dloss_dy * trace.dense_out[j];
        const double da = dloss_dy * w[spec.head_w + j];
        const double dz = da * (1.0 - trace.dense_out[j] * trace.dense_out[j]);
        grad[spec.dense_b + j] += dz;
        const double* last_h = trace.layers.back().hidden.data() + (steps - 1) * H_last;
        double* grow = grad + spec.dense_w + j * H_last;
        const double* wrow = w + spec.dense_w + j * H_last;
        for (std::size_t k = 0; k < H_last; ++k) {
            grow[k] += dz * last_h[k];
            dh_final[k] += dz * wrow[k];
        }
    }

    // Gradients flowing into each layer's h_t and c_t from the future.
    std::vector<std::vector<double>> dh_rec(L), dc_rec(L);
    for (std::size_t l = 0; l < L; ++l) {
        dh_rec[l].assign(spec.layers[l].hidden, 0.0);
        dc_rec[l].assign(spec.layers[l].hidden, 0.0);
    }

    std::vector<double> from_above;
    std::vector<double> dz(4 * spec.layers.back().hidden);
    for (std::size_t t = steps; t-- > 0;) {
        from_above.assign(spec.layers.back().hidden, 0.0);
        if (t == steps - 1) from_above = dh_final;
        for (std::size_t l = L; l-- > 0;) {
            const LayerSpec& layer = spec.layers[l];
            const std::size_t H = layer.hidden;
            const std::size_t I = layer.input;
            const LayerTrace& lt = trace.layers[l];
            const std::size_t at = t * H;

            dz.resize(4 * H);
            for (std::size_t j = 0; j < H; ++j) {
                const double gi = lt.gate_i[at + j];
                const double gf = lt.gate_f[at + j];
                const double gg = lt.gate_g[at + j];
                const double go = lt.gate_o[at + j];
                const double u = lt.cell_tanh[at + j];
                const double c_prev = t > 0 ? lt.cell[at - H + j] : 0.0;

                const double dh = dh_rec[l][j] + from_above[j];
                double dc = dc_rec[l][j] + dh * go * (1.0 - u * u);
                const double d_o = dh * u;
                dz[3 * H + j] = d_o * go * (1.0 - go);
                dz[0 * H + j] = dc * gg * gi * (1.0 - gi);
                dz[1 * H + j] = dc * c_prev * gf * (1.0 - gf);
                dz[2 * H + j] = dc * gi * (1.0 - gg * gg);
                dc_rec[l][j] = dc * gf;
            }

            // Weight gradients and the gradients passed on: to h_{t-1} of
            // this layer and to h_t of the layer below (or the input).
            const double* prev_h = t > 0 ? lt.hidden.data() + at - H : nullptr;
            const double* below =
                l > 0 ? trace.layers[l - 1].hidden.data() + t * I : nullptr; // I == H_{l-1}
            const double x_t = x[t];

            std::fill(dh_rec[l].begin(), dh_rec[l].end(), 0.0);
            std::vector<double> dx(l > 0 ? I : 0, 0.0);
            for (std::size_t row = 0; row < 4 * H; ++row) {
                const double dzr = dz[row];
                if (dzr == 0.0) continue;
                grad[layer.bias + row] += dzr;
                double* gx = grad + layer.wx + row * I;
                if (l == 0) {
                    gx[0] += dzr * x_t;
                } else {
                    for (std::size_t k = 0; k < I; ++k) gx[k] += dzr * below[k];
                    const double* wx = w + layer.wx + row * I;
                    for (std::size_t k = 0; k < I; ++k) dx[k] += dzr * wx[k];
                }
                if (t > 0) {
                    double* gh = grad + layer.wh + row * H;
                    for (std::size_t k = 0; k < H; ++k) gh[k] += dzr * prev_h[k];
                }
                const double* wh = w + layer.wh + row * H;
                double* dhr = dh_rec[l].data();
                for (std::size_t k = 0; k < H; ++k) dhr[k] += dzr * wh[k];
            }
            if (l > 0) from_above = std::move(dx);
        }
    }
}

std::vector<double> scaled_inputs(const SynchronizedCycle& cycle, double scale) {
    std::vector<double> x(cycle.warped_indices.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = cycle.warped_indices[i] * scale;
    return x;
}

/// Sum-of-squared-errors loss over all cycles; fills `grad` when non-null.
double loss_and_gradient(const double* w, const NetSpec& spec,
                         const std::vector<std::vector<double>>& inputs,
                         const std::vector<double>& targets, double* grad) {
    double loss = 0.0;
    ForwardTrace trace;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const double y = forward(w, spec, inputs[s], grad ? &trace : nullptr);
        const double err = (grad ? trace.output : y) - targets[s];
        loss += err * err;
        if (grad) backward(w, spec, inputs[s], trace, 2.0 * err, grad);
    }
    return loss;
}

std::vector<double> initial_weights(const RegressorConfig& cfg, const NetSpec& spec,
                                    double output_bias) {
    std::vector<double> w(spec.total, 0.0);
    std::mt19937_64 rng(cfg.seed);
    for (const LayerSpec& layer : spec.layers) {
        const double bound = 1.0 / std::sqrt(double(layer.hidden));
        std::uniform_real_distribution<double> pick(-bound, bound);
        for (std::size_t k = 0; k < 4 * layer.hidden * layer.input; ++k)
            w[layer.wx + k] = pick(rng);
        for (std::size_t k = 0; k < 4 * layer.hidden * layer.hidden; ++k)
            w[layer.wh + k] = pick(rng);
        // Forget gates start open so early cell states survive the sequence.
        for (std::size_t j = 0; j < layer.hidden; ++j) w[layer.bias + layer.hidden + j] = 1.0;
    }
    const std::size_t h_last = spec.layers.back().hidden;
    {
        const double bound = 1.0 / std::sqrt(double(h_last));
        std::uniform_real_distribution<double> pick(-bound, bound);
        for (std::size_t k = 0; k < spec.dense_size * h_last; ++k) w[spec.dense_w + k] = pick(rng);
    }
    {
        const double bound = 1.0 / std::sqrt(double(spec.dense_size));
        std::uniform_real_distribution<double> pick(-bound, bound);
        for (std::size_t k = 0; k < spec.dense_size; ++k) w[spec.head_w + k] = pick(rng);
    }
    w[spec.head_b] = output_bias;
    return w;
}

} // namespace

void RegressorConfig::validate() const {
    if (lstm_layer_sizes.empty())
        fail(Errc::out_of_range, "at least one recurrent layer is required");
    for (std::size_t size : lstm_layer_sizes)
        if (size == 0) fail(Errc::out_of_range, "recurrent layer sizes must be positive");
    if (dense_size == 0) fail(Errc::out_of_range, "dense layer size must be positive");
    if (!(learning_rate > 0.0)) fail(Errc::out_of_range, "learning rate must be positive");
    if (epochs == 0) fail(Errc::out_of_range, "at least one epoch is required");
    if (plateau_epochs == 0) fail(Errc::out_of_range, "plateau patience must be positive");
}

std::size_t parameter_count(const RegressorConfig& cfg) {
    cfg.validate();
    return NetSpec::build(cfg).total;
}

SohModel train(const std::vector<SynchronizedCycle>& cycles, const SOHSeries& targets,
               const RegressorConfig& cfg) {
    cfg.validate();
    if (cycles.empty()) fail(Errc::misaligned_data, "no training cycles");
    const std::size_t d = cycles.front().length();
    if (d == 0) fail(Errc::misaligned_data, "training cycles are empty");

    std::vector<std::vector<double>> inputs;
    std::vector<double> y;
    CycleNumber previous = 0;
    const double scale = 1.0 / double(d);
    for (const SynchronizedCycle& cycle : cycles) {
        if (cycle.length() != d)
            fail(Errc::misaligned_data,
                 "cycle " + std::to_string(cycle.cycle_number) + " has length " +
                     std::to_string(cycle.length()) + ", expected " + std::to_string(d));
        if (cycle.cycle_number <= previous)
            fail(Errc::misaligned_data, "cycle numbers must be strictly increasing");
        previous = cycle.cycle_number;
        if (cycle.cycle_number < 1 ||
            std::size_t(cycle.cycle_number) > targets.size())
            fail(Errc::misaligned_data, "no SOH target for cycle " +
                                            std::to_string(cycle.cycle_number));
        inputs.push_back(scaled_inputs(cycle, scale));
        y.push_back(targets.at_cycle(cycle.cycle_number));
    }

    const NetSpec spec = NetSpec::build(cfg);
    // Start the output at the target mean so training only has to learn the
    // variation around it.
    double mean_target = 0.0;
    for (double v : y) mean_target += v;
    mean_target /= double(y.size());
    std::vector<double> w = initial_weights(cfg, spec, mean_target);

    // Adaptive-moment gradient descent, full batch.
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    std::vector<double> m(spec.total, 0.0), v(spec.total, 0.0), grad(spec.total);
    double beta1_t = 1.0, beta2_t = 1.0;

    SohModel model;
    model.config = cfg;
    model.input_length = d;
    model.input_scale = scale;
    model.trained_from = cycles.front().cycle_number;
    model.trained_to = cycles.back().cycle_number;

    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = loss_and_gradient(w.data(), spec, inputs, y, grad.data());
        if (!std::isfinite(loss))
            fail(Errc::non_finite_loss, "training diverged at epoch " + std::to_string(epoch) +
                                            "; lower the learning rate");
        model.epoch_loss.push_back(loss);
        if (loss < best) {
            best = loss;
            since_best = 0;
        } else if (++since_best >= cfg.plateau_epochs) {
            break;
        }

        beta1_t *= kBeta1;
        beta2_t *= kBeta2;
        for (std::size_t p = 0; p < spec.total; ++p) {
            m[p] = kBeta1 * m[p] + (1.0 - kBeta1) * grad[p];
            v[p] = kBeta2 * v[p] + (1.0 - kBeta2) * grad[p] * grad[p];
            const double m_hat = m[p] / (1.0 - beta1_t);
            const double v_hat = v[p] / (1.0 - beta2_t);
            w[p] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + kEps);
        }
    }

    model.weights = std::move(w);
    return model;
}

double predict(const SohModel& model, const SynchronizedCycle& cycle) {
    model.config.validate();
    const NetSpec spec = NetSpec::build(model.config);
    if (model.weights.size() != spec.total)
        fail(Errc::dimension_mismatch, "model holds " + std::to_string(model.weights.size()) +
                                           " weights, architecture needs " +
                                           std::to_string(spec.total));
    if (cycle.length() != model.input_length)
        fail(Errc::dimension_mismatch, "cycle length " + std::to_string(cycle.length()) +
                                           " does not match the trained length " +
                                           std::to_string(model.input_length));
    return forward(model.weights.data(), spec, scaled_inputs(cycle, model.input_scale), nullptr);
}

double rmse(const std::vector<double>& estimates, const std::vector<double>& targets) {
    if (estimates.size() != targets.size() || estimates.empty())
        fail(Errc::length_mismatch, "got " + std::to_string(estimates.size()) +
                                        " estimates against " + std::to_string(targets.size()) +
                                        " targets");
    double sum = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double diff = estimates[i] - targets[i];
        sum += diff * diff;
    }
    return std::sqrt(sum / double(estimates.size()));
}

double gradient_check(const RegressorConfig& cfg, const std::vector<SynchronizedCycle>& cycles,
                      const std::vector<double>& targets) {
    cfg.validate();
    if (cycles.empty() || cycles.size() != targets.size())
        fail(Errc::misaligned_data, "probe cycles and targets must align");
    const std::size_t d = cycles.front().length();
    const double scale = 1.0 / double(d);
    std::vector<std::vector<double>> inputs;
    for (const SynchronizedCycle& cycle : cycles) inputs.push_back(scaled_inputs(cycle, scale));

    const NetSpec spec = NetSpec::build(cfg);
    std::vector<double> w = initial_weights(cfg, spec, 0.5);
    std::vector<double> analytic(spec.total, 0.0);
    loss_and_gradient(w.data(), spec, inputs, targets, analytic.data());

    constexpr double kStep = 1e-5;
    double worst = 0.0;
    for (std::size_t p = 0; p < spec.total; ++p) {
        const double keep = w[p];
        w[p] = keep + kStep;
        const double up = loss_and_gradient(w.data(), spec, inputs, targets, nullptr);
        w[p] = keep - kStep;
        const double down = loss_and_gradient(w.data(), spec, inputs, targets, nullptr);
        w[p] = keep;
        const double numeric = (up - down) / (2.0 * kStep);
        const double denom = std::max({1.0, std::abs(analytic[p]), std::abs(numeric)});
        worst = std::max(worst, std::abs(analytic[p] - numeric) / denom);
    }
    return worst;
}

} // namespace kneespot
