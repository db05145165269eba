#include "gpfq/network.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gpfq/parallel.hpp"
#include "gpfq/quantize.hpp"

namespace gpfq {

namespace {

struct ShapeVisitor;

int spatial_out(int in, int k, int stride, PaddingMode padding) {
    if (padding == PaddingMode::same) {
        return (in + stride - 1) / stride;
    }
    if (k > in) {
        throw std::invalid_argument("kernel larger than input map");
    }
    return (in - k) / stride + 1;
}

}  // namespace

int TensorShape::size() const {
    int n = 1;
    for (int d : dims) n *= d;
    return n;
}

const char* layer_kind_name(const LayerSpec& layer) {
    struct Namer {
        const char* operator()(const DenseLayer&) const { return "dense"; }
        const char* operator()(const Conv2dLayer&) const { return "conv2d"; }
        const char* operator()(const BatchNormLayer&) const { return "batchnorm"; }
        const char* operator()(const ActivationLayer&) const { return "activation"; }
        const char* operator()(const MaxPoolLayer&) const { return "maxpool"; }
    };
    return std::visit(Namer{}, layer);
}

TensorShape layer_output_shape(const LayerSpec& layer, const TensorShape& in) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        if (in.size() != d->weights.rows()) {
            throw std::invalid_argument("dense layer input size mismatch");
        }
        if (d->bias.size() != d->weights.cols()) {
            throw std::invalid_argument("dense layer bias size mismatch");
        }
        return TensorShape{{static_cast<int>(d->weights.cols())}};
    }
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
        if (!in.spatial() || in.dims[2] != c->in_channels) {
            throw std::invalid_argument("conv2d layer input shape mismatch");
        }
        if (c->kernel.rows() != c->kh * c->kw * c->in_channels ||
            c->kernel.cols() != c->out_channels ||
            c->bias.size() != c->out_channels) {
            throw std::invalid_argument("conv2d kernel storage mismatch");
        }
        const int oh = spatial_out(in.dims[0], c->kh, c->stride, c->padding);
        const int ow = spatial_out(in.dims[1], c->kw, c->stride, c->padding);
        return TensorShape{{oh, ow, c->out_channels}};
    }
    if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
        const int channels = in.spatial() ? in.dims[2] : in.size();
        if (b->scale.size() != channels || b->shift.size() != channels) {
            throw std::invalid_argument("batchnorm parameter size mismatch");
        }
        return in;
    }
    if (std::holds_alternative<ActivationLayer>(layer)) {
        return in;
    }
    const auto& p = std::get<MaxPoolLayer>(layer);
    if (!in.spatial()) {
        throw std::invalid_argument("maxpool needs a spatial input");
    }
    const int oh = spatial_out(in.dims[0], p.ph, p.stride, PaddingMode::valid);
    const int ow = spatial_out(in.dims[1], p.pw, p.stride, PaddingMode::valid);
    return TensorShape{{oh, ow, in.dims[2]}};
}

void validate_model(const NetworkModel& model) {
    TensorShape shape = model.input_shape;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        try {
            shape = layer_output_shape(model.layers[i], shape);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("layer " + std::to_string(i) + " (" +
                                        layer_kind_name(model.layers[i]) +
                                        ") does not compose with layer " +
                                        std::to_string(i ? i - 1 : 0) + ": " + e.what());
        }
    }
}

Eigen::MatrixXd im2col(const Eigen::VectorXd& feature_map, int h, int w, int c,
                       int kh, int kw, int stride, PaddingMode padding) {
    if (feature_map.size() != static_cast<Eigen::Index>(h) * w * c) {
        throw std::invalid_argument("im2col: feature map size mismatch");
    }
    const int oh = spatial_out(h, kh, stride, padding);
    const int ow = spatial_out(w, kw, stride, padding);
    int pad_top = 0, pad_left = 0;
    if (padding == PaddingMode::same) {
        const int pad_h = std::max((oh - 1) * stride + kh - h, 0);
        const int pad_w = std::max((ow - 1) * stride + kw - w, 0);
        pad_top = pad_h / 2;
        pad_left = pad_w / 2;
    }
    Eigen::MatrixXd patches = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(oh) * ow, static_cast<Eigen::Index>(kh) * kw * c);
    for (int orow = 0; orow < oh; ++orow) {
        for (int ocol = 0; ocol < ow; ++ocol) {
            const Eigen::Index p = static_cast<Eigen::Index>(orow) * ow + ocol;
            for (int kr = 0; kr < kh; ++kr) {
                const int r = orow * stride - pad_top + kr;
                if (r < 0 || r >= h) continue;
                for (int kc = 0; kc < kw; ++kc) {
                    const int col = ocol * stride - pad_left + kc;
                    if (col < 0 || col >= w) continue;
                    for (int ch = 0; ch < c; ++ch) {
                        patches(p, (static_cast<Eigen::Index>(kr) * kw + kc) * c + ch) =
                            feature_map[(static_cast<Eigen::Index>(r) * w + col) * c + ch];
                    }
                }
            }
        }
    }
    return patches;
}

namespace {

Eigen::MatrixXd apply_layer(const LayerSpec& layer, const Eigen::MatrixXd& acts,
                            const TensorShape& in, const TensorShape& out) {
    const Eigen::Index m = acts.rows();
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        return (acts * d->weights).rowwise() + d->bias.transpose();
    }
    if (const auto* cv = std::get_if<Conv2dLayer>(&layer)) {
        Eigen::MatrixXd result(m, out.size());
        const int cout = cv->out_channels;
        for (Eigen::Index s = 0; s < m; ++s) {
            const Eigen::MatrixXd patches =
                im2col(acts.row(s).transpose(), in.dims[0], in.dims[1], in.dims[2],
                       cv->kh, cv->kw, cv->stride, cv->padding);
            const Eigen::MatrixXd maps =
                (patches * cv->kernel).rowwise() + cv->bias.transpose();
            for (Eigen::Index p = 0; p < maps.rows(); ++p) {
                for (int ch = 0; ch < cout; ++ch) {
                    result(s, p * cout + ch) = maps(p, ch);
                }
            }
        }
        return result;
    }
    if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
        Eigen::MatrixXd result(m, acts.cols());
        if (in.spatial()) {
            const int c = in.dims[2];
            for (Eigen::Index j = 0; j < acts.cols(); ++j) {
                const int ch = static_cast<int>(j % c);
                result.col(j) = b->scale[ch] * acts.col(j).array() + b->shift[ch];
            }
        } else {
            for (Eigen::Index j = 0; j < acts.cols(); ++j) {
                result.col(j) = b->scale[j] * acts.col(j).array() + b->shift[j];
            }
        }
        return result;
    }
    if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
        switch (a->fn) {
            case ActivationKind::identity:
                return acts;
            case ActivationKind::relu:
                return acts.cwiseMax(0.0);
            case ActivationKind::softmax: {
                Eigen::MatrixXd result(m, acts.cols());
                for (Eigen::Index s = 0; s < m; ++s) {
                    Eigen::ArrayXd row = acts.row(s).array() - acts.row(s).maxCoeff();
                    row = row.exp();
                    result.row(s) = row / row.sum();
                }
                return result;
            }
        }
        return acts;
    }
    const auto& pool = std::get<MaxPoolLayer>(layer);
    const int h = in.dims[0], w = in.dims[1], c = in.dims[2];
    const int oh = out.dims[0], ow = out.dims[1];
    Eigen::MatrixXd result(m, out.size());
    for (Eigen::Index s = 0; s < m; ++s) {
        for (int orow = 0; orow < oh; ++orow) {
            for (int ocol = 0; ocol < ow; ++ocol) {
                for (int ch = 0; ch < c; ++ch) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int kr = 0; kr < pool.ph; ++kr) {
                        for (int kc = 0; kc < pool.pw; ++kc) {
                            const int r = orow * pool.stride + kr;
                            const int col = ocol * pool.stride + kc;
                            best = std::max(
                                best, acts(s, (static_cast<Eigen::Index>(r) * w + col) * c + ch));
                        }
                    }
                    result(s, (static_cast<Eigen::Index>(orow) * ow + ocol) * c + ch) = best;
                }
            }
        }
    }
    return result;
}

}  // namespace

Eigen::MatrixXd forward(const NetworkModel& model, const Eigen::MatrixXd& batch,
                        int upto_layers) {
    if (batch.cols() != model.input_shape.size()) {
        throw std::invalid_argument("batch feature count does not match model input shape");
    }
    const size_t stop = upto_layers < 0 ? model.layers.size()
                                        : std::min<size_t>(model.layers.size(),
                                                           static_cast<size_t>(upto_layers));
    Eigen::MatrixXd acts = batch;
    TensorShape shape = model.input_shape;
    for (size_t i = 0; i < stop; ++i) {
        const TensorShape next = layer_output_shape(model.layers[i], shape);
        acts = apply_layer(model.layers[i], acts, shape, next);
        shape = next;
    }
    return acts;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> embed_bias(const Eigen::MatrixXd& weights,
                                                       const Eigen::VectorXd& bias,
                                                       const Eigen::MatrixXd& data) {
    if (bias.size() != weights.cols() || data.cols() != weights.rows()) {
        throw std::invalid_argument("embed_bias: shape mismatch");
    }
    Eigen::MatrixXd w_aug(weights.rows() + 1, weights.cols());
    w_aug.topRows(weights.rows()) = weights;
    w_aug.row(weights.rows()) = bias.transpose();
    Eigen::MatrixXd x_aug(data.rows(), data.cols() + 1);
    x_aug.leftCols(data.cols()) = data;
    x_aug.col(data.cols()).setOnes();
    return {w_aug, x_aug};
}

namespace {

Eigen::MatrixXd stacked_patches(const Eigen::MatrixXd& acts, const TensorShape& in,
                                const Conv2dLayer& conv) {
    const int oh = spatial_out(in.dims[0], conv.kh, conv.stride, conv.padding);
    const int ow = spatial_out(in.dims[1], conv.kw, conv.stride, conv.padding);
    const Eigen::Index per_sample = static_cast<Eigen::Index>(oh) * ow;
    Eigen::MatrixXd all(acts.rows() * per_sample, conv.kernel.rows());
    for (Eigen::Index s = 0; s < acts.rows(); ++s) {
        all.middleRows(s * per_sample, per_sample) =
            im2col(acts.row(s).transpose(), in.dims[0], in.dims[1], in.dims[2],
                   conv.kh, conv.kw, conv.stride, conv.padding);
    }
    return all;
}

// Quantizes the columns of w_aug against the given data matrices and writes
// alphabet codes truncated to archive (float) precision.
Eigen::MatrixXd quantize_columns(const Eigen::MatrixXd& w_aug,
                                 const Eigen::MatrixXd& analog_aug,
                                 const Eigen::MatrixXd& quantized_aug,
                                 const Alphabet& alphabet, bool first_layer,
                                 int threads) {
    Eigen::MatrixXd q_aug(w_aug.rows(), w_aug.cols());
    parallel_for(static_cast<int>(w_aug.cols()), threads, [&](int j) {
        NeuronQuantizationResult r =
            first_layer
                ? quantize_neuron_first_layer(w_aug.col(j), quantized_aug, alphabet)
                : quantize_neuron_hidden_layer(w_aug.col(j), analog_aug, quantized_aug,
                                               alphabet);
        q_aug.col(j) = r.codes.cast<float>().cast<double>();
    });
    return q_aug;
}

}  // namespace

std::pair<NetworkModel, QuantizationReport> quantize_network(
    const NetworkModel& model, const Eigen::MatrixXd& batch,
    const QuantizeNetworkOptions& options) {
    validate_model(model);
    if (batch.rows() < 1) {
        throw std::invalid_argument("quantize_network: empty calibration batch");
    }
    const auto t_start = std::chrono::steady_clock::now();

    NetworkModel quantized = model;
    QuantizationReport report;
    bool any_quantized = false;
    TensorShape shape = model.input_shape;

    for (size_t i = 0; i < model.layers.size(); ++i) {
        const auto layer_start = std::chrono::steady_clock::now();
        const LayerSpec& layer = model.layers[i];
        LayerQuantizationReport entry;
        entry.layer_index = static_cast<int>(i);
        entry.kind = layer_kind_name(layer);

        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            const Eigen::MatrixXd analog = forward(model, batch, static_cast<int>(i));
            const Eigen::MatrixXd quantized_acts =
                forward(quantized, batch, static_cast<int>(i));
            const double radius = radius_from_weights(d->weights, options.c_alpha);
            const Alphabet alphabet = build_alphabet(options.levels, radius);
            auto [w_aug, y_aug] = embed_bias(d->weights, d->bias, analog);
            auto [w_unused, yt_aug] = embed_bias(d->weights, d->bias, quantized_acts);
            const Eigen::MatrixXd q_aug = quantize_columns(
                w_aug, y_aug, yt_aug, alphabet, !any_quantized, options.threads);
            DenseLayer q_layer;
            q_layer.weights = q_aug.topRows(d->weights.rows());
            q_layer.bias = q_aug.row(d->weights.rows()).transpose();
            quantized.layers[i] = q_layer;
            entry.alphabet_radius = radius;
            entry.levels = options.levels;
            const double denom = (y_aug * w_aug).norm();
            entry.error = (y_aug * w_aug - yt_aug * q_aug).norm();
            entry.relative_error = denom > 0.0 ? entry.error / denom
                                               : (entry.error > 0.0
                                                      ? std::numeric_limits<double>::infinity()
                                                      : 0.0);
            any_quantized = true;
        } else if (const auto* cv = std::get_if<Conv2dLayer>(&layer)) {
            const Eigen::MatrixXd analog = forward(model, batch, static_cast<int>(i));
            const Eigen::MatrixXd quantized_acts =
                forward(quantized, batch, static_cast<int>(i));
            const double radius = radius_from_weights(cv->kernel, options.c_alpha);
            const Alphabet alphabet = build_alphabet(options.levels, radius);
            const Eigen::MatrixXd patches = stacked_patches(analog, shape, *cv);
            const Eigen::MatrixXd patches_q = stacked_patches(quantized_acts, shape, *cv);
            auto [w_aug, y_aug] = embed_bias(cv->kernel, cv->bias, patches);
            auto [w_unused, yt_aug] = embed_bias(cv->kernel, cv->bias, patches_q);
            const Eigen::MatrixXd q_aug = quantize_columns(
                w_aug, y_aug, yt_aug, alphabet, !any_quantized, options.threads);
            Conv2dLayer q_layer = *cv;
            q_layer.kernel = q_aug.topRows(cv->kernel.rows());
            q_layer.bias = q_aug.row(cv->kernel.rows()).transpose();
            quantized.layers[i] = q_layer;
            entry.alphabet_radius = radius;
            entry.levels = options.levels;
            const double denom = (y_aug * w_aug).norm();
            entry.error = (y_aug * w_aug - yt_aug * q_aug).norm();
            entry.relative_error = denom > 0.0 ? entry.error / denom
                                               : (entry.error > 0.0
                                                      ? std::numeric_limits<double>::infinity()
                                                      : 0.0);
            any_quantized = true;
        }

        if (any_quantized && entry.levels > 0) {
            entry.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - layer_start)
                    .count();
            report.layers.push_back(entry);
        }
        shape = layer_output_shape(layer, shape);
    }

    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {quantized, report};
}

}  // namespace gpfq
