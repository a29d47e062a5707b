#include "automixer/recurrent.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "automixer/errors.hpp"

namespace automixer {

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor gate(const Tensor& packed, std::size_t index, std::size_t hidden) {
    return narrow(packed, 1, index * hidden, hidden);
}

// One step given the input projection x_t W_i + b_i, already [B, gates*H].
CellState step_projected(const CellParams& cell, const Tensor& x_proj, const CellState& state) {
    const auto hd = cell.hidden_dim;
    const Tensor h_proj = linear(state.h, cell.w_hidden, cell.b_hidden);
    if (cell.kind == CellKind::gru) {
        const Tensor r = sigmoid(add(gate(x_proj, 0, hd), gate(h_proj, 0, hd)));
        const Tensor z = sigmoid(add(gate(x_proj, 1, hd), gate(h_proj, 1, hd)));
        const Tensor n = tanh(add(gate(x_proj, 2, hd), mul(r, gate(h_proj, 2, hd))));
        // (1 - z) * n + z * h
        return {add(n, mul(z, sub(state.h, n))), Tensor{}};
    }
    const Tensor g = add(x_proj, h_proj);
    const Tensor i = sigmoid(gate(g, 0, hd));
    const Tensor f = sigmoid(gate(g, 1, hd));
    const Tensor c_hat = tanh(gate(g, 2, hd));
    const Tensor o = sigmoid(gate(g, 3, hd));
    const Tensor c = add(mul(f, state.c), mul(i, c_hat));
    return {mul(o, tanh(c)), c};
}

void check_state(const CellParams& cell, const CellState& state, std::size_t batch) {
    const Shape want{batch, cell.hidden_dim};
    if (state.h.shape() != want || (cell.kind == CellKind::lstm && state.c.shape() != want)) {
        throw DimensionError("cell state must be " + shape_to_string(want) + ", got " +
                             shape_to_string(state.h.shape()));
    }
}

// Promotes [T, C] to [1, T, C]; remembers whether to squeeze back.
std::pair<Tensor, bool> batched(const Tensor& x, const char* what) {
    if (x.rank() == 3) return {x, false};
    if (x.rank() == 2) return {reshape(x, {1, x.dim(0), x.dim(1)}), true};
    throw DimensionError(std::string(what) + " expects [T, C] or [B, T, C], got " +
                         shape_to_string(x.shape()));
}

Tensor unbatched(const Tensor& y, bool squeeze) {
    return squeeze ? reshape(y, {y.dim(1), y.dim(2)}) : y;
}

}  // namespace

CellParams CellParams::random(CellKind kind, std::size_t input_dim, std::size_t hidden_dim,
                              std::mt19937_64& rng) {
    if (input_dim == 0 || hidden_dim == 0) throw ConfigError("cell dimensions must be positive");
    CellParams p;
    p.kind = kind;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    const auto width = p.gates() * hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    p.w_input = uniform_tensor({input_dim, width}, bound, rng);
    p.w_hidden = uniform_tensor({hidden_dim, width}, bound, rng);
    p.b_input = Tensor::zeros({width}, true);
    p.b_hidden = Tensor::zeros({width}, true);
    return p;
}

CellParams CellParams::zeros(CellKind kind, std::size_t input_dim, std::size_t hidden_dim) {
    CellParams p;
    p.kind = kind;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    const auto width = p.gates() * hidden_dim;
    p.w_input = Tensor::zeros({input_dim, width}, true);
    p.w_hidden = Tensor::zeros({hidden_dim, width}, true);
    p.b_input = Tensor::zeros({width}, true);
    p.b_hidden = Tensor::zeros({width}, true);
    return p;
}

void CellParams::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + "w_input", w_input});
    out.push_back({prefix + "w_hidden", w_hidden});
    out.push_back({prefix + "b_input", b_input});
    out.push_back({prefix + "b_hidden", b_hidden});
}

CellState initial_state(const CellParams& cell, std::size_t batch) {
    CellState s{Tensor::zeros({batch, cell.hidden_dim}), Tensor{}};
    if (cell.kind == CellKind::lstm) s.c = Tensor::zeros({batch, cell.hidden_dim});
    return s;
}

CellState cell_step(const CellParams& cell, const Tensor& x_t, const CellState& state) {
    if (x_t.rank() == 1) {
        auto lift = [&](const Tensor& t) { return t.defined() ? reshape(t, {1, t.numel()}) : t; };
        if (state.h.rank() != 1) throw DimensionError("unbatched step needs an unbatched state");
        auto next = cell_step(cell, lift(x_t), {lift(state.h), lift(state.c)});
        auto drop = [](const Tensor& t) { return t.defined() ? reshape(t, {t.numel()}) : t; };
        return {drop(next.h), drop(next.c)};
    }
    if (x_t.rank() != 2 || x_t.dim(1) != cell.input_dim) {
        throw DimensionError("cell input must be [B, " + std::to_string(cell.input_dim) + "], got " +
                             shape_to_string(x_t.shape()));
    }
    check_state(cell, state, x_t.dim(0));
    return step_projected(cell, linear(x_t, cell.w_input, cell.b_input), state);
}

Tensor run_sequence(const CellParams& cell, const Tensor& x) {
    if (x.rank() != 3 || x.dim(2) != cell.input_dim) {
        throw DimensionError("sequence input must be [B, T, " + std::to_string(cell.input_dim) +
                             "], got " + shape_to_string(x.shape()));
    }
    const auto batch = x.dim(0);
    const auto steps = x.dim(1);
    const auto width = cell.gates() * cell.hidden_dim;
    const Tensor projected = linear(x, cell.w_input, cell.b_input);
    CellState state = initial_state(cell, batch);
    std::vector<Tensor> hidden;
    hidden.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const Tensor x_proj = reshape(narrow(projected, 1, t, 1), {batch, width});
        state = step_projected(cell, x_proj, state);
        hidden.push_back(state.h);
    }
    return stack(hidden, 1);
}

void RecurrentDecoder::collect(ParameterList& out, const std::string& prefix) const {
    cell.collect(out, prefix + "cell.");
    out.push_back({prefix + "proj_w", proj_w});
    out.push_back({prefix + "proj_b", proj_b});
}

std::size_t compressed_channels(std::size_t channels, double cr) {
    if (channels < 3) {
        throw ConfigError("channel compression needs at least 3 channels, got " +
                          std::to_string(channels));
    }
    if (!(cr > 0.0 && cr < 1.0)) throw ConfigError("compression ratio must lie in (0, 1)");
    const auto kept = static_cast<std::size_t>(std::llround((1.0 - cr) * static_cast<double>(channels)));
    const std::size_t c_prime = std::max<std::size_t>(2, kept);
    if (c_prime >= channels) {
        throw ConfigError("compression infeasibility due to fewer channels: cr=" + std::to_string(cr) +
                          " keeps " + std::to_string(c_prime) + " of " + std::to_string(channels));
    }
    return c_prime;
}

Tensor encode_channels(const CellParams& encoder, const Tensor& x) {
    auto [xb, squeeze] = batched(x, "encode");
    if (xb.dim(2) != encoder.input_dim) {
        throw SchemaError("encoder expects " + std::to_string(encoder.input_dim) +
                          " channels, input has " + std::to_string(xb.dim(2)));
    }
    return unbatched(run_sequence(encoder, xb), squeeze);
}

Tensor decode_channels(const RecurrentDecoder& decoder, const Tensor& z) {
    auto [zb, squeeze] = batched(z, "decode");
    if (zb.dim(2) != decoder.cell.input_dim) {
        throw SchemaError("decoder expects " + std::to_string(decoder.cell.input_dim) +
                          " compressed channels, input has " + std::to_string(zb.dim(2)));
    }
    const Tensor hidden = run_sequence(decoder.cell, zb);
    return unbatched(linear(hidden, decoder.proj_w, decoder.proj_b), squeeze);
}

ChannelAutoEncoder::ChannelAutoEncoder(CellParams encoder, RecurrentDecoder decoder)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
    if (encoder_.hidden_dim >= encoder_.input_dim || encoder_.hidden_dim == 0) {
        throw ConfigError("autoencoder needs 1 <= C' < C");
    }
    if (decoder_.cell.input_dim != encoder_.hidden_dim ||
        decoder_.cell.hidden_dim != encoder_.hidden_dim ||
        decoder_.proj_w.shape() != Shape{encoder_.hidden_dim, encoder_.input_dim} ||
        decoder_.proj_b.shape() != Shape{encoder_.input_dim}) {
        throw DimensionError("decoder shapes do not match encoder (C=" +
                             std::to_string(encoder_.input_dim) +
                             ", C'=" + std::to_string(encoder_.hidden_dim) + ")");
    }
}

ChannelAutoEncoder ChannelAutoEncoder::random(CellKind kind, std::size_t channels,
                                              std::size_t compressed, std::mt19937_64& rng) {
    auto enc = CellParams::random(kind, channels, compressed, rng);
    RecurrentDecoder dec;
    dec.cell = CellParams::random(kind, compressed, compressed, rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(compressed));
    dec.proj_w = uniform_tensor({compressed, channels}, bound, rng);
    dec.proj_b = Tensor::zeros({channels}, true);
    return ChannelAutoEncoder(std::move(enc), std::move(dec));
}

ChannelAutoEncoder ChannelAutoEncoder::zeros(CellKind kind, std::size_t channels,
                                             std::size_t compressed) {
    RecurrentDecoder dec{CellParams::zeros(kind, compressed, compressed),
                         Tensor::zeros({compressed, channels}, true), Tensor::zeros({channels}, true)};
    return ChannelAutoEncoder(CellParams::zeros(kind, channels, compressed), std::move(dec));
}

ParameterList ChannelAutoEncoder::parameters() const {
    ParameterList out;
    encoder_.collect(out, "encoder.");
    decoder_.collect(out, "decoder.");
    return out;
}

Tensor reconstruction_loss(const ChannelAutoEncoder& ae, const Tensor& x) {
    return loss_mse(ae.decode(ae.encode(x)), x);
}

}  // namespace automixer
