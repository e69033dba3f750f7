#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pubvec/common.hpp"
#include "pubvec/embedding/vocabulary.hpp"

namespace pubvec::embedding {

/// One binary prediction in the output layer: a row of the output matrix
/// and whether the row should score high (label 1) or low (label 0).
struct OutputTarget {
    std::uint32_t row = 0;
    std::uint8_t label = 0;
};

/// Appends the targets for predicting `word`: its Huffman path under
/// hierarchical softmax, or the word itself plus `negative` noise draws.
/// Noise draws that hit the word are dropped, not redrawn.
void append_targets(const Vocabulary& vocab, std::uint32_t word, std::uint32_t negative, Rng& rng,
                    std::vector<OutputTarget>& out);

template <typename Real>
struct MatrixView {
    Real* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    Real* row(std::size_t r) const { return data + r * cols; }
};

namespace detail {

template <typename Real>
Real dot(const Real* a, const Real* b, std::size_t n) {
    Real acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    }
    Real tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename Real>
void axpy(Real a, const Real* x, Real* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename Real>
Real sigmoid(Real x) {
    if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

// log(1 + exp(x)) without overflow.
template <typename Real>
Real softplus(Real x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace detail

/// Sink that applies plain SGD updates. Each matrix can be frozen, which is
/// how inference trains a single document vector.
template <typename Real>
struct SgdSink {
    Real lr = 0;
    bool learn_doc = true;
    bool learn_words = true;
    bool learn_outputs = true;

    void output(std::uint32_t, Real* w, Real coeff, const Real* hidden, std::size_t d) {
        if (learn_outputs) detail::axpy(lr * coeff, hidden, w, d);
    }
    void input(std::size_t slot, Real* v, const Real* err, Real scale, std::size_t d) {
        const bool learn = slot == 0 ? learn_doc : learn_words;
        if (learn) detail::axpy(lr * scale, err, v, d);
    }
};

/// One training step: the hidden vector is the mean of `inputs` (the
/// document row first, then any context word rows), each target is scored
/// with a logistic unit, and the sink receives the ascent direction for
/// every touched row. Returns the summed negative log-likelihood.
///
/// The sink sees output rows before input rows. Input errors are
/// accumulated from output weights as they were before the step.
template <typename Real, typename Sink>
Real window_step(std::span<Real* const> inputs, std::span<const OutputTarget> targets, const MatrixView<Real>& outputs,
                 Sink& sink, std::vector<Real>& hidden, std::vector<Real>& err) {
    const std::size_t d = outputs.cols;
    hidden.assign(d, Real(0));
    err.assign(d, Real(0));
    const Real scale = Real(1) / static_cast<Real>(inputs.size());
    if (inputs.size() == 1) {
        std::copy(inputs[0], inputs[0] + d, hidden.begin());
    } else {
        for (Real* v : inputs) detail::axpy(scale, v, hidden.data(), d);
    }

    Real loss = 0;
    for (const auto& t : targets) {
        Real* w = outputs.row(t.row);
        const Real f = detail::dot(hidden.data(), w, d);
        loss += t.label ? detail::softplus(-f) : detail::softplus(f);
        const Real coeff = static_cast<Real>(t.label) - detail::sigmoid(f);
        detail::axpy(coeff, w, err.data(), d);
        sink.output(t.row, w, coeff, hidden.data(), d);
    }
    for (std::size_t slot = 0; slot < inputs.size(); ++slot) {
        sink.input(slot, inputs[slot], err.data(), scale, d);
    }
    return loss;
}

}  // namespace pubvec::embedding
