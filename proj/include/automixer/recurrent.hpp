#pragma once

// GRU/LSTM cells and the channel-compressing autoencoder built from them.
//
// The encoder reads x in R^{T x C} step by step and emits its whole hidden
// sequence as z in R^{T x C'}; the decoder runs a C'-wide cell over z and
// projects every step back to C channels. Parameters never depend on T.

#include <cstddef>
#include <random>
#include <string>

#include "automixer/config.hpp"
#include "automixer/tensor.hpp"

namespace automixer {

/// Gate layout: GRU columns are [reset | update | candidate], LSTM columns
/// are [input | forget | cell | output], each block hidden_dim wide.
struct CellParams {
    CellKind kind = CellKind::gru;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    Tensor w_input;   // [input_dim, gates * hidden_dim]
    Tensor w_hidden;  // [hidden_dim, gates * hidden_dim]
    Tensor b_input;   // [gates * hidden_dim]
    Tensor b_hidden;  // [gates * hidden_dim]

    std::size_t gates() const { return kind == CellKind::gru ? 3 : 4; }

    /// Weights uniform in +-1/sqrt(hidden_dim), biases zero.
    static CellParams random(CellKind kind, std::size_t input_dim, std::size_t hidden_dim,
                             std::mt19937_64& rng);
    static CellParams zeros(CellKind kind, std::size_t input_dim, std::size_t hidden_dim);

    void collect(ParameterList& out, const std::string& prefix) const;
};

/// GRU uses only h; LSTM carries (h, c).
struct CellState {
    Tensor h;
    Tensor c;
};

CellState initial_state(const CellParams& cell, std::size_t batch);

/// One recurrence step. x_t is [input_dim] (state [hidden_dim]) or batched
/// [B, input_dim] (state [B, hidden_dim]).
CellState cell_step(const CellParams& cell, const Tensor& x_t, const CellState& state);

/// Runs the cell from a zero state over x [B, T, input_dim]; returns every hidden state [B, T, hidden_dim].
Tensor run_sequence(const CellParams& cell, const Tensor& x);

struct RecurrentDecoder {
    CellParams cell;    // C' -> C'
    Tensor proj_w;      // [C', C]
    Tensor proj_b;      // [C]

    std::size_t output_channels() const { return proj_b.numel(); }
    void collect(ParameterList& out, const std::string& prefix) const;
};

/// C' = max(2, round((1 - cr) * C)); ConfigError when C' >= C or C < 3.
std::size_t compressed_channels(std::size_t channels, double cr);

/// [T, C] or [B, T, C] -> same rank with C' channels. SchemaError on channel mismatch.
Tensor encode_channels(const CellParams& encoder, const Tensor& x);
/// [T, C'] or [B, T, C'] -> same rank with C channels.
Tensor decode_channels(const RecurrentDecoder& decoder, const Tensor& z);

class ChannelAutoEncoder {
public:
    ChannelAutoEncoder() = default;
    ChannelAutoEncoder(CellParams encoder, RecurrentDecoder decoder);

    static ChannelAutoEncoder random(CellKind kind, std::size_t channels, std::size_t compressed,
                                     std::mt19937_64& rng);
    static ChannelAutoEncoder zeros(CellKind kind, std::size_t channels, std::size_t compressed);

    Tensor encode(const Tensor& x) const { return encode_channels(encoder_, x); }
    Tensor decode(const Tensor& z) const { return decode_channels(decoder_, z); }

    CellKind kind() const { return encoder_.kind; }
    std::size_t channels() const { return encoder_.input_dim; }
    std::size_t compressed() const { return encoder_.hidden_dim; }
    const CellParams& encoder() const { return encoder_; }
    const RecurrentDecoder& decoder() const { return decoder_; }

    /// Names: encoder.*, decoder.cell.*, decoder.proj_w, decoder.proj_b
    ParameterList parameters() const;

private:
    CellParams encoder_;
    RecurrentDecoder decoder_;
};

/// mean((x - decode(encode(x)))^2)
Tensor reconstruction_loss(const ChannelAutoEncoder& ae, const Tensor& x);

}  // namespace automixer
