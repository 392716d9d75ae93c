#include "spraysim/network.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace spraysim {

ArchKind arch_from_string(const std::string& s) {
    if (s == "gated_residual") return ArchKind::gated_residual;
    if (s == "plain_mlp") return ArchKind::plain_mlp;
    throw std::invalid_argument("unknown architecture '" + s +
                                "' (expected gated_residual|plain_mlp)");
}

std::string to_string(ArchKind kind) {
    return kind == ArchKind::gated_residual ? "gated_residual" : "plain_mlp";
}

namespace {

template <typename Model, typename F>
void for_each_layer(Model& model, F&& f) {
    if (model.arch.kind == ArchKind::gated_residual) {
        f(model.embed, "embed");
        f(model.gate_hidden, "gate_hidden");
        f(model.gate_out, "gate_out");
        f(model.trunk_in, "trunk_in");
        for (std::size_t i = 0; i < model.blocks.size(); ++i) {
            const std::string base = "block" + std::to_string(i);
            f(model.blocks[i][0], base + ".l0");
            f(model.blocks[i][1], base + ".l1");
        }
        f(model.out, "out");
    } else {
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            f(model.layers[i], "layer" + std::to_string(i));
        }
    }
}

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& pre) {
    switch (act) {
        case Activation::relu:
            return pre.cwiseMax(0.0);
        case Activation::sigmoid:
            return ((-pre.array()).exp() + 1.0).inverse().matrix();
        case Activation::identity:
            return pre;
    }
    throw std::logic_error("bad activation");
}

/// Allocate all layers for an architecture with zeroed parameters.
ColorModel make_skeleton(const ModelArch& arch) {
    if (arch.class_count < 1 || arch.width < 1) {
        throw std::invalid_argument("model architecture: width and class count must be >= 1");
    }
    ColorModel m;
    m.arch = arch;
    auto zero = [](int rows, int cols, Activation act) {
        return DenseLayer{Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows), act};
    };
    const int d = arch.width;
    const int c = arch.class_count;
    if (arch.kind == ArchKind::gated_residual) {
        if (arch.residual_blocks < 1) {
            throw std::invalid_argument("gated model needs at least one residual block");
        }
        m.embed = zero(d, 3, Activation::relu);
        m.gate_hidden = zero(d, 1 + c, Activation::sigmoid);
        m.gate_out = zero(d, d, Activation::sigmoid);
        m.trunk_in = zero(d, d + 1 + c, Activation::relu);
        for (int i = 0; i < arch.residual_blocks; ++i) {
            m.blocks.push_back({zero(d, d, Activation::relu), zero(d, d, Activation::relu)});
        }
        m.out = zero(3, d, Activation::identity);
    } else {
        if (arch.hidden_layers < 0) {
            throw std::invalid_argument("plain model needs hidden_layers >= 0");
        }
        int in = arch.input_dim();
        for (int i = 0; i < arch.hidden_layers; ++i) {
            m.layers.push_back(zero(d, in, Activation::relu));
            in = d;
        }
        m.layers.push_back(zero(3, in, Activation::identity));
    }
    return m;
}

}  // namespace

std::size_t ColorModel::parameter_count() const {
    std::size_t n = 0;
    for_each_layer(*this, [&](const DenseLayer& l, const std::string&) {
        n += static_cast<std::size_t>(l.W.size()) + static_cast<std::size_t>(l.b.size());
    });
    return n;
}

ColorModel make_model(const ModelArch& arch, std::uint64_t seed) {
    ColorModel m = make_skeleton(arch);
    std::mt19937_64 rng(derive_seed(seed, "init"));
    auto uniform = [&]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    for_each_layer(m, [&](DenseLayer& l, const std::string&) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.W.cols()));
        for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) {
                l.W(r, c) = (2.0 * uniform() - 1.0) * limit;
            }
        }
        l.b.setZero();
    });
    return m;
}

Batch make_batch(const DatasetBundle& bundle, std::span<const std::size_t> indices) {
    const int c = bundle.class_count;
    Batch batch;
    batch.inputs.setZero(4 + c, static_cast<Eigen::Index>(indices.size()));
    batch.targets.resize(3, static_cast<Eigen::Index>(indices.size()));
    for (Eigen::Index k = 0; k < batch.inputs.cols(); ++k) {
        const PaintSampleRecord& r = bundle.records[indices[static_cast<std::size_t>(k)]];
        batch.inputs.block<3, 1>(0, k) = r.base_color_norm;
        batch.inputs(3, k) = r.thick_norm;
        if (r.class_id < 0 || r.class_id >= c) {
            throw std::invalid_argument("record class id outside [0,classes)");
        }
        batch.inputs(4 + r.class_id, k) = 1.0;
        batch.targets.col(k) = r.painted_color_norm;
    }
    return batch;
}

Eigen::MatrixXd forward_raw(const ColorModel& model, const Eigen::MatrixXd& inputs,
                            ForwardCache* cache) {
    if (inputs.rows() != model.arch.input_dim()) {
        throw std::invalid_argument("forward: input rows do not match the architecture");
    }
    ForwardCache local;
    ForwardCache& cc = cache ? *cache : local;

    if (model.arch.kind == ArchKind::plain_mlp) {
        cc.plain_pre.clear();
        cc.plain_act.clear();
        Eigen::MatrixXd a = inputs;
        for (const DenseLayer& l : model.layers) {
            Eigen::MatrixXd pre = (l.W * a).colwise() + l.b;
            a = activate(l.act, pre);
            if (cache) {
                cc.plain_pre.push_back(std::move(pre));
                cc.plain_act.push_back(a);
            }
        }
        return a;
    }

    const int d = model.arch.width;
    const auto base = inputs.topRows(3);
    const auto thick_class = inputs.bottomRows(inputs.rows() - 3);

    cc.embed_pre = (model.embed.W * base).colwise() + model.embed.b;
    cc.embed_act = activate(Activation::relu, cc.embed_pre);

    cc.gate_hidden_pre = (model.gate_hidden.W * thick_class).colwise() + model.gate_hidden.b;
    cc.gate_hidden_act = activate(Activation::sigmoid, cc.gate_hidden_pre);
    cc.gate_pre = (model.gate_out.W * cc.gate_hidden_act).colwise() + model.gate_out.b;
    cc.gate_act = activate(Activation::sigmoid, cc.gate_pre);

    cc.gated_embed = cc.embed_act.cwiseProduct(cc.gate_act);

    cc.trunk_input.resize(d + thick_class.rows(), inputs.cols());
    cc.trunk_input.topRows(d) = cc.gated_embed;
    cc.trunk_input.bottomRows(thick_class.rows()) = thick_class;

    cc.trunk_pre = (model.trunk_in.W * cc.trunk_input).colwise() + model.trunk_in.b;
    cc.trunk_act.clear();
    cc.block_pre.clear();
    cc.trunk_act.push_back(activate(Activation::relu, cc.trunk_pre));

    for (const auto& blk : model.blocks) {
        const Eigen::MatrixXd& h = cc.trunk_act.back();
        Eigen::MatrixXd u_pre = (blk[0].W * h).colwise() + blk[0].b;
        Eigen::MatrixXd w_pre = (blk[1].W * activate(Activation::relu, u_pre)).colwise() + blk[1].b;
        cc.trunk_act.push_back(activate(Activation::relu, w_pre) + h);
        cc.block_pre.push_back({std::move(u_pre), std::move(w_pre)});
    }

    return (model.out.W * cc.trunk_act.back()).colwise() + model.out.b;
}

Vec3 forward_raw(const ColorModel& model, const Vec3& base_color_norm, double thick_norm,
                 int class_id) {
    Eigen::MatrixXd in = Eigen::MatrixXd::Zero(model.arch.input_dim(), 1);
    in.block<3, 1>(0, 0) = base_color_norm;
    in(3, 0) = thick_norm;
    if (class_id < 0 || class_id >= model.arch.class_count) {
        throw std::invalid_argument("class id outside [0,classes)");
    }
    in(4 + class_id, 0) = 1.0;
    return forward_raw(model, in);
}

Vec3 predict(const ColorModel& model, const Vec3& base_color_norm, double thick_norm,
             int class_id) {
    Vec3 y = forward_raw(model, base_color_norm, thick_norm, class_id);
    return y.cwiseMax(0.0).cwiseMin(1.0);
}

double loss(const ColorModel& model, const Batch& batch) {
    if (batch.size() == 0) {
        throw std::invalid_argument("loss over an empty batch");
    }
    const Eigen::MatrixXd y = forward_raw(model, batch.inputs);
    return (y - batch.targets).squaredNorm() / static_cast<double>(batch.size());
}

namespace {

Eigen::ArrayXXd relu_mask(const Eigen::MatrixXd& pre) {
    return (pre.array() > 0.0).cast<double>();
}

}  // namespace

GradientSet gradients(const ColorModel& model, const Batch& batch, double* loss_out) {
    if (batch.size() == 0) {
        throw std::invalid_argument("gradients over an empty batch");
    }
    ForwardCache cc;
    const Eigen::MatrixXd y = forward_raw(model, batch.inputs, &cc);
    const double m = static_cast<double>(batch.size());
    if (loss_out) {
        *loss_out = (y - batch.targets).squaredNorm() / m;
    }

    std::size_t layer_count = 0;
    for_each_layer(model, [&](const DenseLayer&, const std::string&) { ++layer_count; });
    GradientSet grads(layer_count);

    Eigen::MatrixXd dY = (2.0 / m) * (y - batch.targets);

    if (model.arch.kind == ArchKind::plain_mlp) {
        Eigen::MatrixXd d_act = std::move(dY);
        for (std::size_t li = model.layers.size(); li-- > 0;) {
            const DenseLayer& l = model.layers[li];
            Eigen::MatrixXd d_pre;
            switch (l.act) {
                case Activation::relu:
                    d_pre = (d_act.array() * relu_mask(cc.plain_pre[li])).matrix();
                    break;
                case Activation::sigmoid: {
                    const auto& s = cc.plain_act[li].array();
                    d_pre = (d_act.array() * s * (1.0 - s)).matrix();
                    break;
                }
                case Activation::identity:
                    d_pre = std::move(d_act);
                    break;
            }
            const Eigen::MatrixXd& input =
                li == 0 ? batch.inputs : cc.plain_act[li - 1];
            grads[li].dW.noalias() = d_pre * input.transpose();
            grads[li].db = d_pre.rowwise().sum();
            if (li > 0) {
                d_act = l.W.transpose() * d_pre;
            }
        }
        return grads;
    }

    const int d = model.arch.width;
    const std::size_t n_blocks = model.blocks.size();
    const auto base = batch.inputs.topRows(3);
    const auto thick_class = batch.inputs.bottomRows(batch.inputs.rows() - 3);
    // Canonical layer order: embed, gate_hidden, gate_out, trunk_in,
    // block{i}.l0/l1, out.
    const std::size_t idx_out = 4 + 2 * n_blocks;

    // Output layer (identity activation).
    grads[idx_out].dW.noalias() = dY * cc.trunk_act.back().transpose();
    grads[idx_out].db = dY.rowwise().sum();
    Eigen::MatrixXd dH = model.out.W.transpose() * dY;

    // Residual blocks, in reverse.
    for (std::size_t bi = n_blocks; bi-- > 0;) {
        const auto& blk = model.blocks[bi];
        const Eigen::MatrixXd& u_pre = cc.block_pre[bi][0];
        const Eigen::MatrixXd& w_pre = cc.block_pre[bi][1];
        const Eigen::MatrixXd& h_in = cc.trunk_act[bi];

        Eigen::MatrixXd dw_pre = (dH.array() * relu_mask(w_pre)).matrix();
        const Eigen::MatrixXd u_act = activate(Activation::relu, u_pre);
        grads[4 + 2 * bi + 1].dW.noalias() = dw_pre * u_act.transpose();
        grads[4 + 2 * bi + 1].db = dw_pre.rowwise().sum();

        Eigen::MatrixXd du = blk[1].W.transpose() * dw_pre;
        Eigen::MatrixXd du_pre = (du.array() * relu_mask(u_pre)).matrix();
        grads[4 + 2 * bi].dW.noalias() = du_pre * h_in.transpose();
        grads[4 + 2 * bi].db = du_pre.rowwise().sum();

        // The skip path passes dH through unchanged; the block path adds to it.
        dH.noalias() += blk[0].W.transpose() * du_pre;
    }

    // Trunk input layer.
    Eigen::MatrixXd dtrunk_pre = (dH.array() * relu_mask(cc.trunk_pre)).matrix();
    grads[3].dW.noalias() = dtrunk_pre * cc.trunk_input.transpose();
    grads[3].db = dtrunk_pre.rowwise().sum();
    Eigen::MatrixXd dZ = model.trunk_in.W.transpose() * dtrunk_pre;

    Eigen::MatrixXd dEP = dZ.topRows(d);

    // Gate: gated_embed = embed_act .* gate_act.
    Eigen::MatrixXd dE = dEP.cwiseProduct(cc.gate_act);
    Eigen::MatrixXd dG = dEP.cwiseProduct(cc.embed_act);

    Eigen::MatrixXd dg_pre =
        (dG.array() * cc.gate_act.array() * (1.0 - cc.gate_act.array())).matrix();
    grads[2].dW.noalias() = dg_pre * cc.gate_hidden_act.transpose();
    grads[2].db = dg_pre.rowwise().sum();

    Eigen::MatrixXd dGH = model.gate_out.W.transpose() * dg_pre;
    Eigen::MatrixXd dgh_pre =
        (dGH.array() * cc.gate_hidden_act.array() * (1.0 - cc.gate_hidden_act.array())).matrix();
    grads[1].dW.noalias() = dgh_pre * thick_class.transpose();
    grads[1].db = dgh_pre.rowwise().sum();

    // Embedding.
    Eigen::MatrixXd dE_pre = (dE.array() * relu_mask(cc.embed_pre)).matrix();
    grads[0].dW.noalias() = dE_pre * base.transpose();
    grads[0].db = dE_pre.rowwise().sum();

    return grads;
}

AdamState make_adam_state(const ColorModel& model) {
    AdamState state;
    for_each_layer(model, [&](const DenseLayer& l, const std::string&) {
        state.m.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()),
                           Eigen::VectorXd::Zero(l.b.size())});
        state.v.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()),
                           Eigen::VectorXd::Zero(l.b.size())});
    });
    state.t = 0;
    return state;
}

void adam_step(ColorModel& model, AdamState& state, const GradientSet& grads, double lr,
               double beta1, double beta2, double epsilon) {
    if (grads.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: gradient/state layer count mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

    std::size_t idx = 0;
    for_each_layer(model, [&](DenseLayer& l, const std::string&) {
        auto update = [&](auto& theta, auto& mm, auto& vv, const auto& g) {
            mm = beta1 * mm + (1.0 - beta1) * g;
            vv = (beta2 * vv.array() + (1.0 - beta2) * g.array().square()).matrix();
            theta.array() -=
                lr * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + epsilon);
        };
        update(l.W, state.m[idx].dW, state.v[idx].dW, grads[idx].dW);
        update(l.b, state.m[idx].db, state.v[idx].db, grads[idx].db);
        ++idx;
    });
}

namespace {

double validation_rmse(const ColorModel& model, const DatasetBundle& bundle,
                       std::span<const std::size_t> indices) {
    constexpr std::size_t kChunk = 8192;
    double sum = 0.0;
    for (std::size_t off = 0; off < indices.size(); off += kChunk) {
        const std::size_t len = std::min(kChunk, indices.size() - off);
        const Batch batch = make_batch(bundle, indices.subspan(off, len));
        Eigen::MatrixXd y = forward_raw(model, batch.inputs);
        y = y.cwiseMax(0.0).cwiseMin(1.0);  // inference clamp
        sum += (y - batch.targets).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(indices.size()));
}

}  // namespace

std::pair<ColorModel, TrainReport> train(const DatasetBundle& bundle, const TrainConfig& cfg,
                                         const ModelArch& arch) {
    if (bundle.split.size() != bundle.records.size() || bundle.records.empty()) {
        throw std::invalid_argument("train: dataset has no split assignment");
    }
    if (arch.class_count != bundle.class_count) {
        throw std::invalid_argument("train: architecture class count does not match dataset");
    }
    if (cfg.batch_size < 1 || !(cfg.learning_rate > 0)) {
        throw std::invalid_argument("train: bad batch size or learning rate");
    }
    const auto train_idx_base = bundle.indices_of(Split::train);
    const auto val_idx = bundle.indices_of(Split::val);
    if (train_idx_base.empty() || val_idx.empty()) {
        throw std::invalid_argument("train: empty train or validation split");
    }

    ColorModel model = make_model(arch, cfg.seed);
    model.thick_min = bundle.thick_min;
    model.thick_max = bundle.thick_max;
    AdamState adam = make_adam_state(model);

    std::mt19937_64 rng(derive_seed(cfg.seed, "epoch-shuffle"));
    std::vector<std::size_t> order = train_idx_base;

    TrainReport report;
    ColorModel best = model;
    double best_rmse = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        for (std::size_t off = 0; off < order.size();
             off += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len =
                std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - off);
            const Batch batch = make_batch(bundle, std::span(order).subspan(off, len));
            double batch_loss = 0.0;
            const GradientSet grads = gradients(model, batch, &batch_loss);
            if (!std::isfinite(batch_loss)) {
                throw TrainingError("training diverged (non-finite loss) at epoch " +
                                        std::to_string(epoch),
                                    epoch);
            }
            adam_step(model, adam, grads, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
            loss_sum += batch_loss * static_cast<double>(len);
        }
        report.train_loss.push_back(loss_sum / static_cast<double>(order.size()));

        const double vr = validation_rmse(model, bundle, val_idx);
        report.val_rmse.push_back(vr);
        if (vr < best_rmse) {
            best_rmse = vr;
            best = model;
            report.best_epoch = epoch;
        } else if (cfg.patience > 0 && epoch - report.best_epoch >= cfg.patience) {
            break;
        }
    }

    return {std::move(best), std::move(report)};
}

ColorPointCloud predict_cloud(const ColorModel& model, const ColorPointCloud& cloud,
                              const ThicknessField& field, std::span<const int> classes) {
    validate(cloud);
    if (field.size() != cloud.size() || classes.size() != cloud.size()) {
        throw std::invalid_argument("predict_cloud: field/class size mismatch");
    }
    const auto covered = coverage_mask(field);
    ColorPointCloud out = cloud;

    constexpr std::size_t kChunk = 8192;
    const int c = model.arch.class_count;
    for (std::size_t off = 0; off < covered.size(); off += kChunk) {
        const std::size_t len = std::min(kChunk, covered.size() - off);
        Eigen::MatrixXd in = Eigen::MatrixXd::Zero(4 + c, static_cast<Eigen::Index>(len));
        for (std::size_t k = 0; k < len; ++k) {
            const std::size_t j = covered[off + k];
            in.block<3, 1>(0, static_cast<Eigen::Index>(k)) = color_to_norm(cloud.colors[j]);
            in(3, static_cast<Eigen::Index>(k)) =
                (field[j] - model.thick_min) / (model.thick_max - model.thick_min);
            if (classes[j] < 0 || classes[j] >= c) {
                throw std::invalid_argument("predict_cloud: class id outside [0,classes)");
            }
            in(4 + classes[j], static_cast<Eigen::Index>(k)) = 1.0;
        }
        Eigen::MatrixXd y = forward_raw(model, in);
        y = y.cwiseMax(0.0).cwiseMin(1.0);
        for (std::size_t k = 0; k < len; ++k) {
            out.colors[covered[off + k]] = norm_to_color(y.col(static_cast<Eigen::Index>(k)));
        }
    }
    return out;
}

double rmse(std::span<const Vec3> pred, std::span<const Vec3> target) {
    if (pred.empty() || pred.size() != target.size()) {
        throw std::invalid_argument("rmse: empty or mismatched inputs");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        sum += (pred[i] - target[i]).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

double mre_percent(std::span<const Vec3> pred, std::span<const Vec3> target,
                   std::size_t* excluded) {
    if (pred.empty() || pred.size() != target.size()) {
        throw std::invalid_argument("mre: empty or mismatched inputs");
    }
    double sum = 0.0;
    std::size_t used = 0, skipped = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double tn = target[i].norm();
        if (tn < 1e-6) {
            ++skipped;  // relative error undefined for black targets
            continue;
        }
        sum += (pred[i] - target[i]).norm() / tn;
        ++used;
    }
    if (excluded) *excluded = skipped;
    if (used == 0) {
        throw std::invalid_argument("mre: every target has near-zero norm");
    }
    return 100.0 * sum / static_cast<double>(used);
}

Vec3 LinearModel::predict(const Vec3& base_color_norm, double thick_norm, int class_id) const {
    if (class_id < 0 || class_id >= class_count) {
        throw std::invalid_argument("class id outside [0,classes)");
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(4 + class_count);
    x.head<3>() = base_color_norm;
    x(3) = thick_norm;
    x(4 + class_id) = 1.0;
    return W * x + b;
}

LinearModel linear_regression_fit(const DatasetBundle& bundle) {
    std::vector<std::size_t> idx;
    if (bundle.split.size() == bundle.records.size() && !bundle.records.empty()) {
        idx = bundle.indices_of(Split::train);
    } else {
        idx.resize(bundle.records.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    }
    const int c = bundle.class_count;
    const Eigen::Index cols = 4 + c + 1;
    if (static_cast<Eigen::Index>(idx.size()) < cols) {
        throw std::invalid_argument("linear fit needs at least input-dim+1 records");
    }

    Eigen::MatrixXd a(static_cast<Eigen::Index>(idx.size()), cols);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(idx.size()), 3);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const PaintSampleRecord& rec = bundle.records[idx[static_cast<std::size_t>(r)]];
        a.row(r).setZero();
        a(r, 0) = rec.base_color_norm.x();
        a(r, 1) = rec.base_color_norm.y();
        a(r, 2) = rec.base_color_norm.z();
        a(r, 3) = rec.thick_norm;
        a(r, 4 + rec.class_id) = 1.0;
        a(r, cols - 1) = 1.0;
        y.row(r) = rec.painted_color_norm.transpose();
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    // The one-hot block plus the intercept column are structurally collinear
    // (they sum to the same vector), so full rank is cols-1. Anything lower
    // means degenerate data.
    if (cod.rank() < cols - 1) {
        throw std::runtime_error("linear fit: rank-deficient design matrix (rank " +
                                 std::to_string(cod.rank()) + " of " + std::to_string(cols) + ")");
    }
    const Eigen::MatrixXd beta = cod.solve(y);  // cols x 3, minimum-norm solution

    LinearModel lm;
    lm.class_count = c;
    lm.W = beta.topRows(cols - 1).transpose();
    lm.b = beta.row(cols - 1).transpose();
    return lm;
}

// ---------------------------------------------------------------------------
// Weights file

using nlohmann::json;

void save_model(const ColorModel& model, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "weights container assumes a little-endian host");

    json tensors = json::array();
    std::string blob;
    for_each_layer(model, [&](const DenseLayer& l, const std::string& name) {
        auto dump = [&](const Eigen::MatrixXd& t, const std::string& tname) {
            tensors.push_back({{"name", tname},
                               {"rows", t.rows()},
                               {"cols", t.cols()}});
            for (Eigen::Index r = 0; r < t.rows(); ++r) {
                for (Eigen::Index c = 0; c < t.cols(); ++c) {
                    const float f = static_cast<float>(t(r, c));
                    const char* p = reinterpret_cast<const char*>(&f);
                    blob.append(p, sizeof(float));
                }
            }
        };
        dump(l.W, name + ".W");
        dump(l.b, name + ".b");
    });

    json header{{"format", "spraysim-weights"},
                {"version", 1},
                {"byte_order", "little"},
                {"arch",
                 {{"kind", to_string(model.arch.kind)},
                  {"class_count", model.arch.class_count},
                  {"width", model.arch.width},
                  {"residual_blocks", model.arch.residual_blocks},
                  {"hidden_layers", model.arch.hidden_layers}}},
                {"thick_min", model.thick_min},
                {"thick_max", model.thick_max},
                {"tensors", tensors}};

    write_file_atomic(path, header.dump() + "\n" + blob);
}

ColorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open weights file: " + path.string());
    }
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw std::runtime_error("weights file: missing header line");
    }
    json header = json::parse(header_line);
    if (header.value("format", "") != "spraysim-weights") {
        throw std::runtime_error("weights file: not a spraysim weights container");
    }
    if (header.value("version", -1) != 1) {
        throw std::runtime_error("weights file: unsupported version " +
                                 std::to_string(header.value("version", -1)));
    }
    if (header.value("byte_order", "") != "little") {
        throw std::runtime_error("weights file: unsupported byte order");
    }

    ModelArch arch;
    const json& ja = header.at("arch");
    arch.kind = arch_from_string(ja.at("kind").get<std::string>());
    arch.class_count = ja.at("class_count").get<int>();
    arch.width = ja.at("width").get<int>();
    arch.residual_blocks = ja.at("residual_blocks").get<int>();
    arch.hidden_layers = ja.at("hidden_layers").get<int>();

    ColorModel model = make_skeleton(arch);
    model.thick_min = header.at("thick_min").get<double>();
    model.thick_max = header.at("thick_max").get<double>();

    const json& tensors = header.at("tensors");
    std::size_t ti = 0;
    for_each_layer(model, [&](DenseLayer& l, const std::string& name) {
        auto read = [&](Eigen::Ref<Eigen::MatrixXd> t, const std::string& tname) {
            if (ti >= tensors.size()) {
                throw std::runtime_error("weights file: tensor list too short");
            }
            const json& jt = tensors[ti++];
            if (jt.at("name") != tname || jt.at("rows") != t.rows() ||
                jt.at("cols") != t.cols()) {
                throw std::runtime_error("weights file: tensor mismatch at '" + tname +
                                         "' (architecture/version conflict)");
            }
            for (Eigen::Index r = 0; r < t.rows(); ++r) {
                for (Eigen::Index c = 0; c < t.cols(); ++c) {
                    float f = 0;
                    if (!in.read(reinterpret_cast<char*>(&f), sizeof(float))) {
                        throw std::runtime_error("weights file: truncated tensor data");
                    }
                    t(r, c) = static_cast<double>(f);
                }
            }
        };
        read(l.W, name + ".W");
        read(l.b, name + ".b");
    });
    if (ti != tensors.size()) {
        throw std::runtime_error("weights file: trailing tensors in header");
    }
    return model;
}

void save_train_report(const TrainReport& report, const std::filesystem::path& path) {
    std::string out = "epoch,train_loss,val_rmse\n";
    char buf[96];
    for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
        const int n = std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e,
                                    report.train_loss[e], report.val_rmse[e]);
        out.append(buf, static_cast<std::size_t>(n));
    }
    write_file_atomic(path, out);
}

}  // namespace spraysim
