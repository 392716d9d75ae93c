#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spraysim/common.hpp"
#include "spraysim/dataset.hpp"
#include "spraysim/point_cloud.hpp"

namespace spraysim {

enum class Activation { relu, sigmoid, identity };

struct DenseLayer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
    Activation act = Activation::relu;
};

enum class ArchKind { gated_residual, plain_mlp };

ArchKind arch_from_string(const std::string& s);
std::string to_string(ArchKind kind);

/// Architecture hyperparameters. The gated network embeds the base color,
/// modulates the embedding by a sigmoid gate driven by [thickness; class],
/// and runs a residual trunk; the plain variant is a parameter-matched deep
/// MLP without gate or skips.
struct ModelArch {
    ArchKind kind = ArchKind::gated_residual;
    int class_count = 2;
    int width = 128;          // embedding/trunk width (gated) or hidden width (plain)
    int residual_blocks = 4;  // gated only; 2 relu layers per block
    int hidden_layers = 11;   // plain only

    int input_dim() const { return 4 + class_count; }
};

/// Color prediction model: maps (base color, normalized thickness, paint
/// class) to a painted color in normalized RGB space.
struct ColorModel {
    ModelArch arch;

    // gated_residual layers
    DenseLayer embed;              // 3 -> d, relu
    DenseLayer gate_hidden;        // (1+C) -> d, sigmoid
    DenseLayer gate_out;           // d -> d, sigmoid
    DenseLayer trunk_in;           // (d+1+C) -> d, relu
    std::vector<std::array<DenseLayer, 2>> blocks;  // d -> d -> d, relu, +skip
    DenseLayer out;                // d -> 3, identity

    // plain_mlp layers (input -> hidden^L -> 3)
    std::vector<DenseLayer> layers;

    // thickness normalization metadata, copied from the dataset
    double thick_min = 0.0;
    double thick_max = 1.0;

    std::size_t parameter_count() const;
};

/// He-uniform initialization, biases zero, deterministic under the seed.
ColorModel make_model(const ModelArch& arch, std::uint64_t seed);

/// Inputs as columns: [base(3); thick_norm(1); one-hot(C)].
struct Batch {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;  // 3 x m

    Eigen::Index size() const { return inputs.cols(); }
};

Batch make_batch(const DatasetBundle& bundle, std::span<const std::size_t> indices);

/// Intermediate activations kept for backpropagation.
struct ForwardCache {
    Eigen::MatrixXd embed_pre, embed_act;
    Eigen::MatrixXd gate_hidden_pre, gate_hidden_act;
    Eigen::MatrixXd gate_pre, gate_act;
    Eigen::MatrixXd gated_embed;
    Eigen::MatrixXd trunk_input;
    Eigen::MatrixXd trunk_pre;
    std::vector<std::array<Eigen::MatrixXd, 2>> block_pre;
    std::vector<Eigen::MatrixXd> trunk_act;  // trunk_act[0] = trunk output, then per block
    std::vector<Eigen::MatrixXd> plain_pre, plain_act;
};

/// Raw (unclamped) forward pass over a batch of input columns.
Eigen::MatrixXd forward_raw(const ColorModel& model, const Eigen::MatrixXd& inputs,
                            ForwardCache* cache = nullptr);

Vec3 forward_raw(const ColorModel& model, const Vec3& base_color_norm, double thick_norm,
                 int class_id);

/// Inference output: raw forward clamped to [0,1]^3.
Vec3 predict(const ColorModel& model, const Vec3& base_color_norm, double thick_norm,
             int class_id);

/// Mean squared L2 error over the batch (raw outputs).
double loss(const ColorModel& model, const Batch& batch);

struct LayerGrad {
    Eigen::MatrixXd dW;
    Eigen::VectorXd db;
};

/// Per-layer gradients in canonical layer order (see for_each_layer in the
/// implementation); exact reverse-mode differentiation of loss().
using GradientSet = std::vector<LayerGrad>;

GradientSet gradients(const ColorModel& model, const Batch& batch, double* loss_out = nullptr);

struct AdamState {
    std::vector<LayerGrad> m, v;  // first/second moment per tensor
    long t = 0;
};

AdamState make_adam_state(const ColorModel& model);

/// Standard Adam with bias correction.
void adam_step(ColorModel& model, AdamState& state, const GradientSet& grads, double lr,
               double beta1, double beta2, double epsilon);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 256;
    int max_epochs = 200;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    int patience = 20;  // early stop after this many epochs without val improvement
};

struct TrainReport {
    std::vector<double> train_loss;  // per-epoch mean training loss
    std::vector<double> val_rmse;    // per-epoch validation RMSE
    int best_epoch = -1;
};

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, int epoch)
        : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

/// Seeded mini-batch Adam training with per-epoch validation; returns the
/// best-validation model. Fully deterministic under the seed.
std::pair<ColorModel, TrainReport> train(const DatasetBundle& bundle, const TrainConfig& cfg,
                                         const ModelArch& arch);

/// Predict painted colors for a cloud under a thickness field: covered
/// points get the clamped network output, uncovered points keep their color.
ColorPointCloud predict_cloud(const ColorModel& model, const ColorPointCloud& cloud,
                              const ThicknessField& field, std::span<const int> classes);

/// Root mean square error over 3-vector pairs.
double rmse(std::span<const Vec3> pred, std::span<const Vec3> target);

/// Mean relative error in percent; pairs with near-zero target norm are
/// excluded from the mean and counted in *excluded when non-null.
double mre_percent(std::span<const Vec3> pred, std::span<const Vec3> target,
                   std::size_t* excluded = nullptr);

/// Affine baseline fit by least squares on [base; thick; one-hot; 1].
struct LinearModel {
    Eigen::MatrixXd W;  // 3 x (4+C)
    Vec3 b;
    int class_count = 1;

    Vec3 predict(const Vec3& base_color_norm, double thick_norm, int class_id) const;
};

/// Closed-form least squares on the train split (all records when no split
/// is assigned). Throws std::runtime_error on rank deficiency beyond the
/// structural one-hot/intercept overlap.
LinearModel linear_regression_fit(const DatasetBundle& bundle);

/// Versioned weights container: one-line JSON header (architecture, dims,
/// normalization metadata, byte order) followed by little-endian float32
/// tensors in declaration order.
void save_model(const ColorModel& model, const std::filesystem::path& path);
ColorModel load_model(const std::filesystem::path& path);

/// TrainReport CSV: epoch,train_loss,val_rmse.
void save_train_report(const TrainReport& report, const std::filesystem::path& path);

}  // namespace spraysim
