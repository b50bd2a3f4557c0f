#pragma once

#include "tprec/model.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tprec {

/// Encoder-decoder forecaster. The encoder reads all but the last observed
/// value; the decoder starts from the last observed value and feeds its own
/// predictions back as inputs.
struct Seq2SeqModel {
    ModelSpec spec;
    RecurrentCore encoder;
    RecurrentCore decoder;
    bool shared_degree = true;
    Matrix w_out;  // l x m
    Vector b_out;

    [[nodiscard]] const DegreeParam& decoder_degree() const { return shared_degree ? encoder.degree : decoder.degree; }

    bool operator==(const Seq2SeqModel&) const = default;
};

inline Seq2SeqModel make_seq2seq_model(const ModelSpec& spec, std::uint64_t seed, bool shared_degree = true) {
    std::mt19937_64 cell_rng(seed);
    std::mt19937_64 degree_rng(seed ^ 0x9E3779B97F4A7C15ULL);
    Seq2SeqModel model;
    model.spec = spec;
    model.shared_degree = shared_degree;
    model.encoder = make_core(spec, cell_rng, degree_rng);
    model.decoder = make_core(spec, cell_rng, degree_rng);
    init_readout(spec.input_dim, spec.hidden_dim, model.w_out, model.b_out, cell_rng);
    return model;
}

template <class Model, class F>
    requires std::is_same_v<std::remove_const_t<Model>, Seq2SeqModel>
void visit_params(Model& model, F&& f) {
    visit_cell_params(model.encoder, "encoder.cell.", f);
    visit_degree_params(model.encoder.degree, "encoder.degree.", f);
    visit_cell_params(model.decoder, "decoder.cell.", f);
    if (!model.shared_degree) visit_degree_params(model.decoder.degree, "decoder.degree.", f);
    f(std::string("readout.w"), std::span(model.w_out.data));
    f(std::string("readout.b"), std::span(model.b_out));
}

/// Horizon predictions from an observed prefix (at least one value).
inline std::vector<Vector> seq2seq_forward(const Seq2SeqModel& model, std::span<const Vector> prefix,
                                           std::size_t horizon) {
    if (prefix.empty()) throw ArgumentError("seq2seq: prefix must hold at least one value");
    RunState st = initial_state(model.encoder);
    for (std::size_t i = 0; i + 1 < prefix.size(); ++i) core_step(model.encoder, model.encoder.degree, prefix[i], st);
    std::vector<Vector> out;
    Vector input = prefix.back();
    for (std::size_t k = 0; k < horizon; ++k) {
        const Vector& h = core_step(model.decoder, model.decoder_degree(), input, st);
        input = readout(model.w_out, model.b_out, h);
        out.push_back(input);
    }
    return out;
}

struct Seq2SeqGradients {
    Seq2SeqModel grad;
    double loss = 0.0;
};

/// Loss over the horizon and its gradient, including the paths through the
/// decoder's fed-back predictions.
inline Seq2SeqGradients seq2seq_gradients(const Seq2SeqModel& model, std::span<const Vector> prefix,
                                          std::span<const Vector> targets, LossKind loss) {
    if (prefix.empty()) throw ArgumentError("seq2seq: prefix must hold at least one value");
    if (targets.empty()) throw ArgumentError("seq2seq: empty horizon");
    const std::size_t l = model.spec.input_dim;
    const std::size_t enc_steps = prefix.size() - 1;
    const std::size_t horizon = targets.size();

    RunState st = initial_state(model.encoder);
    std::vector<StepCache> enc(enc_steps), dec(horizon);
    for (std::size_t i = 0; i < enc_steps; ++i) core_step(model.encoder, model.encoder.degree, prefix[i], st, &enc[i]);
    std::vector<Vector> hs(horizon), residuals(horizon);
    Vector input = prefix.back();
    double sse = 0.0;
    for (std::size_t k = 0; k < horizon; ++k) {
        hs[k] = core_step(model.decoder, model.decoder_degree(), input, st, &dec[k]);
        input = readout(model.w_out, model.b_out, hs[k]);
        Vector r = input;
        for (std::size_t i = 0; i < l; ++i) {
            r[i] -= targets[k][i];
            sse += r[i] * r[i];
        }
        residuals[k] = std::move(r);
    }
    const double scale = loss_scale(loss, horizon * l);

    Seq2SeqGradients out;
    out.loss = sse * scale;
    out.grad = model;
    out.grad.encoder = zeros_like(model.encoder);
    out.grad.decoder = zeros_like(model.decoder);
    out.grad.w_out = Matrix(l, model.spec.hidden_dim);
    out.grad.b_out.assign(l, 0.0);
    DegreeParam& g_dec_deg = model.shared_degree ? out.grad.encoder.degree : out.grad.decoder.degree;

    StateAdjoint adj = StateAdjoint::zeros(model.decoder);
    Vector g_next(l, 0.0);  // dL/d(input of step k+1) = dL/dy_k
    for (std::size_t k = horizon; k-- > 0;) {
        Vector gy = residuals[k];
        for (std::size_t i = 0; i < l; ++i) gy[i] = 2.0 * scale * gy[i] + g_next[i];
        outer_add(gy, hs[k], out.grad.w_out);
        axpy(1.0, gy, out.grad.b_out);
        matvec_t_add(model.w_out, gy, adj.hist[0]);
        g_next = core_step_backward(model.decoder, model.decoder_degree(), dec[k], adj, out.grad.decoder, g_dec_deg);
    }
    for (std::size_t i = enc_steps; i-- > 0;)
        core_step_backward(model.encoder, model.encoder.degree, enc[i], adj, out.grad.encoder, out.grad.encoder.degree);
    check_finite_gradients(out.grad);
    return out;
}

}  // namespace tprec
