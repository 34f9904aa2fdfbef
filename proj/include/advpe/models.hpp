// advpe - adversarial PE manipulation toolkit
// Desk-scale malware classifiers: byte-embedding convolutional nets with
// analytic input gradients, and a linear scorer over hand-crafted features.
//
// All dense math is Eigen over `Scalar` (double). Matrices holding one row per
// byte position are row-major so an L x d embedding can be viewed as a
// (L / K) x (K * d) matrix of non-overlapping windows without copying.

#ifndef ADVPE_MODELS_HPP
#define ADVPE_MODELS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "advpe/common.hpp"

namespace advpe {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

inline constexpr Index byte_tokens = 256;
inline constexpr Index padding_token = 256;
inline constexpr Index vocabulary_size = 257;

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
    return (typename Derived::Scalar(1) + (-x).exp()).inverse();
}

inline Scalar sigmoid(Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); }

enum class ModelKind { ToyMalConv, ToyHierLin, ToyHierReLU, HandCrafted };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind model_kind_from_string(std::string_view name);

// Named blocks over one flat parameter vector. Gradients use the same layout,
// so optimizers and the model container only ever see flat vectors.
class ParameterLayout {
public:
    struct Block {
        std::string name;
        Index rows = 0;
        Index cols = 0;
        Index offset = 0;
    };

    std::size_t add(std::string name, Index rows, Index cols);

    [[nodiscard]] Index size() const noexcept { return size_; }
    [[nodiscard]] const std::vector<Block>& blocks() const noexcept { return blocks_; }
    [[nodiscard]] const Block& block(std::size_t id) const { return blocks_.at(id); }

    [[nodiscard]] Eigen::Map<Matrix> view(Vector& storage, std::size_t id) const {
        const auto& b = blocks_[id];
        return Eigen::Map<Matrix>(storage.data() + b.offset, b.rows, b.cols);
    }
    [[nodiscard]] Eigen::Map<const Matrix> view(const Vector& storage, std::size_t id) const {
        const auto& b = blocks_[id];
        return Eigen::Map<const Matrix>(storage.data() + b.offset, b.rows, b.cols);
    }

private:
    std::vector<Block> blocks_;
    Index size_ = 0;
};

// Gated 1-D convolution over non-overlapping windows, global max pool, one
// hidden ReLU layer, sigmoid output.
class MalConvNet {
public:
    struct Config {
        Index window = 16384;
        Index kernel = 500;  // window width and stride
        Index embed_dim = 8;
        Index filters = 128;
        Index hidden = 128;
    };

    struct Cache {
        Matrix windows;  // P x (K*d), padded input viewed as windows
        Matrix conv;     // A
        Matrix gate;     // sigmoid(B)
        std::vector<Index> winner;  // argmax position per filter
        Vector pooled;
        Vector hidden_pre;
        Vector hidden;
    };

    MalConvNet() = default;
    MalConvNet(const Config& config, std::uint64_t seed);

    [[nodiscard]] const Config& config() const noexcept { return config_; }
    [[nodiscard]] Index positions() const noexcept { return (config_.window + config_.kernel - 1) / config_.kernel; }

    [[nodiscard]] const ParameterLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] Vector& parameters() noexcept { return params_; }
    [[nodiscard]] const Vector& parameters() const noexcept { return params_; }
    [[nodiscard]] Eigen::Map<const Matrix> embedding() const { return layout_.view(params_, embedding_id_); }

    Scalar logit(const Matrix& x, Cache* cache = nullptr) const;
    // Accumulates dlogit-scaled gradients into dx (same shape as x) and/or
    // dparams (layout-shaped, embedding block untouched).
    void backward(const Cache& cache, Scalar dlogit, Matrix* dx, Vector* dparams) const;

private:
    void build_layout();

    Config config_;
    ParameterLayout layout_;
    Vector params_;
    std::size_t embedding_id_ = 0, conv_w_ = 0, conv_b_ = 0, gate_w_ = 0, gate_b_ = 0, dense_w_ = 0, dense_b_ = 0,
                out_w_ = 0, out_b_ = 0;
};

// Five conv(3, same) + activation + max-pool(4) stages, global average pool,
// linear output.
class HierNet {
public:
    struct Config {
        Index window = 4096;
        Index embed_dim = 10;
        Index filters = 16;
        Index stages = 5;
        bool relu = false;
    };

    struct Cache {
        std::vector<Matrix> inputs;     // stage inputs
        std::vector<Matrix> pre;        // conv outputs before activation
        std::vector<std::vector<Index>> winner;  // pool argmax (row index in activation), per output cell
        Matrix last;
        Vector pooled;
    };

    HierNet() = default;
    HierNet(const Config& config, std::uint64_t seed);

    [[nodiscard]] const Config& config() const noexcept { return config_; }
    [[nodiscard]] const ParameterLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] Vector& parameters() noexcept { return params_; }
    [[nodiscard]] const Vector& parameters() const noexcept { return params_; }
    [[nodiscard]] Eigen::Map<const Matrix> embedding() const { return layout_.view(params_, embedding_id_); }

    Scalar logit(const Matrix& x, Cache* cache = nullptr) const;
    void backward(const Cache& cache, Scalar dlogit, Matrix* dx, Vector* dparams) const;

private:
    void build_layout();

    Config config_;
    ParameterLayout layout_;
    Vector params_;
    std::size_t embedding_id_ = 0;
    std::vector<std::size_t> conv_w_, conv_b_;
    std::size_t out_w_ = 0, out_b_ = 0;
};

// Logistic scorer over standardized hand-crafted features.
class FeatureLinearModel {
public:
    FeatureLinearModel();

    [[nodiscard]] const ParameterLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] Vector& parameters() noexcept { return params_; }
    [[nodiscard]] const Vector& parameters() const noexcept { return params_; }

    [[nodiscard]] Scalar logit(const Eigen::VectorXd& features) const;

    void set_standardization(const Eigen::VectorXd& mean, const Eigen::VectorXd& scale);
    [[nodiscard]] Eigen::VectorXd standardize(const Eigen::VectorXd& features) const;
    [[nodiscard]] Eigen::Map<Matrix> weights() { return layout_.view(params_, weights_); }
    [[nodiscard]] Scalar& bias() { return params_(layout_.block(bias_).offset); }

private:
    ParameterLayout layout_;
    Vector params_;
    std::size_t mean_ = 0, scale_ = 0, weights_ = 0, bias_ = 0;
};

struct ModelOptions {
    std::optional<Index> window;
    std::optional<Index> filters;
    std::optional<Index> hidden;
};

class Classifier {
public:
    static Classifier create(ModelKind kind, std::uint64_t seed, const ModelOptions& options = {});

    [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
    [[nodiscard]] bool differentiable() const noexcept { return kind_ != ModelKind::HandCrafted; }
    [[nodiscard]] Index window() const;
    [[nodiscard]] std::optional<Scalar> threshold() const noexcept { return threshold_; }
    void set_threshold(Scalar theta) { threshold_ = theta; }

    // Differentiable kinds only (Error{NotDifferentiable}).
    [[nodiscard]] Matrix embedding_table() const;
    [[nodiscard]] Matrix embed(ByteView bytes) const;
    [[nodiscard]] Scalar forward(const Matrix& x) const;
    // d score / d x.
    [[nodiscard]] Matrix gradient(const Matrix& x) const;
    // Score and d score / d x in one pass.
    Scalar score_and_gradient(const Matrix& x, Matrix& grad) const;

    // Any kind.
    [[nodiscard]] Scalar score(ByteView bytes) const;
    [[nodiscard]] bool detects(ByteView bytes) const;

    [[nodiscard]] const ParameterLayout& layout() const;
    [[nodiscard]] Vector& parameters();
    [[nodiscard]] const Vector& parameters() const;

    // Architecture hyperparameters, stored alongside the weights.
    [[nodiscard]] std::vector<std::pair<std::string, Index>> hyperparameters() const;
    static Classifier from_hyperparameters(ModelKind kind, const std::vector<std::pair<std::string, Index>>& hp);

    MalConvNet* malconv() { return std::get_if<MalConvNet>(&model_); }
    HierNet* hier() { return std::get_if<HierNet>(&model_); }
    FeatureLinearModel* linear() { return std::get_if<FeatureLinearModel>(&model_); }
    const MalConvNet* malconv() const { return std::get_if<MalConvNet>(&model_); }
    const HierNet* hier() const { return std::get_if<HierNet>(&model_); }
    const FeatureLinearModel* linear() const { return std::get_if<FeatureLinearModel>(&model_); }

private:
    void check_shape(const Matrix& x) const;

    ModelKind kind_ = ModelKind::HandCrafted;
    std::variant<MalConvNet, HierNet, FeatureLinearModel> model_;
    std::optional<Scalar> threshold_;
};

struct LabeledBytes {
    ByteView bytes;
    int label = 0;
};

struct TrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    std::uint64_t seed = 7;
    std::size_t validation_every = 4;  // every k-th sample of each class held out
    ModelOptions model;
};

struct TrainResult {
    Classifier model;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
};

// Throws Error{DegenerateCorpus} when a class is missing.
TrainResult train(std::span<const LabeledBytes> corpus, ModelKind kind, const TrainConfig& config = {});

}  // namespace advpe

#endif  // ADVPE_MODELS_HPP
