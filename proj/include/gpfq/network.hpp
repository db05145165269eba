#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "gpfq/alphabet.hpp"

namespace gpfq {

enum class ActivationKind { identity, relu, softmax };
enum class PaddingMode { valid, same };

/// Dense layer: weights are (in x out), activations multiply on the left.
struct DenseLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

/// Kernel stored as a (kh*kw*in_channels) x out_channels matrix; rows follow
/// the (row, col, channel) row-major vectorization used by im2col.
struct Conv2dLayer {
    int kh = 0, kw = 0;
    int in_channels = 0, out_channels = 0;
    int stride = 1;
    PaddingMode padding = PaddingMode::valid;
    Eigen::MatrixXd kernel;
    Eigen::VectorXd bias;
};

/// Folded inference-form affine y = scale * x + shift, per channel for
/// spatial inputs and per feature for flat ones.
struct BatchNormLayer {
    Eigen::VectorXd scale;
    Eigen::VectorXd shift;
};

struct ActivationLayer {
    ActivationKind fn = ActivationKind::identity;
};

struct MaxPoolLayer {
    int ph = 0, pw = 0;
    int stride = 1;
};

using LayerSpec =
    std::variant<DenseLayer, Conv2dLayer, BatchNormLayer, ActivationLayer, MaxPoolLayer>;

/// Either {n} for flat features or {h, w, c} for spatial maps. Spatial maps
/// flatten in (row, col, channel) row-major order.
struct TensorShape {
    std::vector<int> dims;
    int size() const;
    bool spatial() const { return dims.size() == 3; }
};

struct NetworkModel {
    std::string name;
    TensorShape input_shape;
    std::vector<LayerSpec> layers;
};

const char* layer_kind_name(const LayerSpec& layer);

/// Output shape of a layer; throws on non-composing shapes.
TensorShape layer_output_shape(const LayerSpec& layer, const TensorShape& in);

/// Walks every layer and checks that consecutive shapes compose.
void validate_model(const NetworkModel& model);

/// Activations after the first `upto_layers` layers (all layers if negative).
/// batch is m x input_size, one sample per row.
Eigen::MatrixXd forward(const NetworkModel& model, const Eigen::MatrixXd& batch,
                        int upto_layers = -1);

/// Appends bias as an extra weight row and a constant-1 data column so that
/// X_aug * W_aug == X * W + 1 b^T exactly.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> embed_bias(const Eigen::MatrixXd& weights,
                                                       const Eigen::VectorXd& bias,
                                                       const Eigen::MatrixXd& data);

/// Patch matrix of a single h x w x c feature map: row p is the vectorized
/// receptive field of output position p in (row, col, channel) order.
Eigen::MatrixXd im2col(const Eigen::VectorXd& feature_map, int h, int w, int c,
                       int kh, int kw, int stride, PaddingMode padding);

struct LayerQuantizationReport {
    int layer_index = 0;
    std::string kind;
    double alphabet_radius = 0.0;
    int levels = 0;
    double error = 0.0;           // ||Y W - Ytilde Q||_F, bias embedded
    double relative_error = 0.0;  // error / ||Y W||_F
    double seconds = 0.0;
};

struct QuantizationReport {
    std::vector<LayerQuantizationReport> layers;
    double total_seconds = 0.0;
};

struct QuantizeNetworkOptions {
    int levels = 3;
    double c_alpha = 1.0;
    int threads = 1;
};

/// Layer-by-layer GPFQ over the quantizable (dense/conv) layers. Layer l is
/// quantized against activations of the already-quantized layers 1..l-1.
/// Quantized weights are truncated to 32-bit floats, the archive precision.
std::pair<NetworkModel, QuantizationReport> quantize_network(
    const NetworkModel& model, const Eigen::MatrixXd& batch,
    const QuantizeNetworkOptions& options);

}  // namespace gpfq
