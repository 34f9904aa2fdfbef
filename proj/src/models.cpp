// advpe - adversarial PE manipulation toolkit

#include "advpe/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advpe/features.hpp"
#include "advpe/rng.hpp"

namespace advpe {

namespace {

void fill_normal(Eigen::Map<Matrix> m, Rng& rng, Scalar stddev) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            m(i, j) = rng.normal() * stddev;
        }
    }
}

// First index wins ties.
Index argmax_column(const Matrix& m, Index col) {
    Index best = 0;
    for (Index r = 1; r < m.rows(); ++r) {
        if (m(r, col) > m(best, col)) {
            best = r;
        }
    }
    return best;
}

class Adam {
public:
    Adam(Index size, double lr, double weight_decay)
        : m_(Vector::Zero(size)), v_(Vector::Zero(size)), lr_(lr), decay_(weight_decay) {}

    void step(Vector& params, const Vector& grad) {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        Vector g = grad;
        if (decay_ > 0) {
            g += decay_ * params;
        }
        m_ = b1 * m_ + (1 - b1) * g;
        v_ = b2 * v_ + (1 - b2) * g.cwiseProduct(g);
        const double c1 = 1 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1 - std::pow(b2, static_cast<double>(t_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
    }

private:
    Vector m_, v_;
    double lr_, decay_;
    long t_ = 0;
};

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::ToyMalConv: return "malconv";
        case ModelKind::ToyHierLin: return "hier-lin";
        case ModelKind::ToyHierReLU: return "hier-relu";
        case ModelKind::HandCrafted: return "handcrafted";
    }
    return "unknown";
}

ModelKind model_kind_from_string(std::string_view name) {
    for (auto k : {ModelKind::ToyMalConv, ModelKind::ToyHierLin, ModelKind::ToyHierReLU, ModelKind::HandCrafted}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + std::string(name) + "'");
}

std::size_t ParameterLayout::add(std::string name, Index rows, Index cols) {
    blocks_.push_back({std::move(name), rows, cols, size_});
    size_ += rows * cols;
    return blocks_.size() - 1;
}

// --- MalConvNet -------------------------------------------------------------

MalConvNet::MalConvNet(const Config& config, std::uint64_t seed) : config_(config) {
    if (config_.window <= 0 || config_.kernel <= 0 || config_.embed_dim <= 0 || config_.filters <= 0 ||
        config_.hidden <= 0) {
        throw Error(ErrorCode::InvalidConfig, "MalConv dimensions must be positive");
    }
    build_layout();
    params_ = Vector::Zero(layout_.size());
    Rng rng(seed);
    const Index fan_in = config_.kernel * config_.embed_dim;
    fill_normal(layout_.view(params_, embedding_id_), rng, 1.0);
    fill_normal(layout_.view(params_, conv_w_), rng, 1.0 / std::sqrt(static_cast<Scalar>(fan_in)));
    fill_normal(layout_.view(params_, gate_w_), rng, 1.0 / std::sqrt(static_cast<Scalar>(fan_in)));
    fill_normal(layout_.view(params_, dense_w_), rng, 1.0 / std::sqrt(static_cast<Scalar>(config_.filters)));
    fill_normal(layout_.view(params_, out_w_), rng, 1.0 / std::sqrt(static_cast<Scalar>(config_.hidden)));
}

void MalConvNet::build_layout() {
    const Index kd = config_.kernel * config_.embed_dim;
    embedding_id_ = layout_.add("embedding", vocabulary_size, config_.embed_dim);
    conv_w_ = layout_.add("conv_w", config_.filters, kd);
    conv_b_ = layout_.add("conv_b", 1, config_.filters);
    gate_w_ = layout_.add("gate_w", config_.filters, kd);
    gate_b_ = layout_.add("gate_b", 1, config_.filters);
    dense_w_ = layout_.add("dense_w", config_.hidden, config_.filters);
    dense_b_ = layout_.add("dense_b", 1, config_.hidden);
    out_w_ = layout_.add("out_w", 1, config_.hidden);
    out_b_ = layout_.add("out_b", 1, 1);
}

Scalar MalConvNet::logit(const Matrix& x, Cache* cache) const {
    const Index P = positions();
    const Index K = config_.kernel;
    const Index d = config_.embed_dim;
    const auto E = embedding();

    Matrix padded(P * K, d);
    padded.topRows(x.rows()) = x;
    if (P * K > x.rows()) {
        padded.bottomRows(P * K - x.rows()).rowwise() = E.row(padding_token);
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.windows = Eigen::Map<const Matrix>(padded.data(), P, K * d);

    const auto Wc = layout_.view(params_, conv_w_);
    const auto Wg = layout_.view(params_, gate_w_);
    c.conv.noalias() = c.windows * Wc.transpose();
    c.conv.rowwise() += layout_.view(params_, conv_b_).row(0);
    Matrix gate_pre = c.windows * Wg.transpose();
    gate_pre.rowwise() += layout_.view(params_, gate_b_).row(0);
    c.gate = sigmoid(gate_pre.array()).matrix();

    const Matrix gated = c.conv.cwiseProduct(c.gate);
    c.winner.assign(static_cast<std::size_t>(config_.filters), 0);
    c.pooled.resize(config_.filters);
    for (Index f = 0; f < config_.filters; ++f) {
        const Index p = argmax_column(gated, f);
        c.winner[static_cast<std::size_t>(f)] = p;
        c.pooled(f) = gated(p, f);
    }

    c.hidden_pre = layout_.view(params_, dense_w_) * c.pooled + layout_.view(params_, dense_b_).row(0).transpose();
    c.hidden = c.hidden_pre.cwiseMax(0.0);
    return layout_.view(params_, out_w_).row(0).dot(c.hidden) + layout_.view(params_, out_b_)(0, 0);
}

void MalConvNet::backward(const Cache& c, Scalar dlogit, Matrix* dx, Vector* dparams) const {
    const Index K = config_.kernel;
    const Index d = config_.embed_dim;
    const auto w_out = layout_.view(params_, out_w_).row(0).transpose();
    const auto W1 = layout_.view(params_, dense_w_);
    const auto Wc = layout_.view(params_, conv_w_);
    const auto Wg = layout_.view(params_, gate_w_);

    const Vector dz1 = (dlogit * w_out).cwiseProduct((c.hidden_pre.array() > 0.0).cast<Scalar>().matrix());
    const Vector dpooled = W1.transpose() * dz1;

    if (dparams) {
        layout_.view(*dparams, out_w_).row(0) += dlogit * c.hidden.transpose();
        layout_.view(*dparams, out_b_)(0, 0) += dlogit;
        layout_.view(*dparams, dense_w_) += dz1 * c.pooled.transpose();
        layout_.view(*dparams, dense_b_).row(0) += dz1.transpose();
    }

    Matrix dwindows;
    if (dx) {
        dwindows = Matrix::Zero(c.windows.rows(), c.windows.cols());
    }
    for (Index f = 0; f < config_.filters; ++f) {
        const Index p = c.winner[static_cast<std::size_t>(f)];
        const Scalar g = dpooled(f);
        if (g == 0.0) {
            continue;
        }
        const Scalar a = c.conv(p, f);
        const Scalar s = c.gate(p, f);
        const Scalar da = g * s;
        const Scalar db = g * a * s * (1.0 - s);
        if (dparams) {
            layout_.view(*dparams, conv_w_).row(f) += da * c.windows.row(p);
            layout_.view(*dparams, conv_b_)(0, f) += da;
            layout_.view(*dparams, gate_w_).row(f) += db * c.windows.row(p);
            layout_.view(*dparams, gate_b_)(0, f) += db;
        }
        if (dx) {
            dwindows.row(p) += da * Wc.row(f) + db * Wg.row(f);
        }
    }
    if (dx) {
        Eigen::Map<const Matrix> per_byte(dwindows.data(), dwindows.rows() * K, d);
        *dx += per_byte.topRows(dx->rows());
    }
}

// --- HierNet ----------------------------------------------------------------

HierNet::HierNet(const Config& config, std::uint64_t seed) : config_(config) {
    Index divisor = 1;
    for (Index s = 0; s < config_.stages; ++s) {
        divisor *= 4;
    }
    if (config_.window <= 0 || config_.window % divisor != 0 || config_.filters <= 0 || config_.embed_dim <= 0) {
        throw Error(ErrorCode::InvalidConfig,
                    "hierarchical window must be a positive multiple of 4^stages = " + std::to_string(divisor));
    }
    build_layout();
    params_ = Vector::Zero(layout_.size());
    Rng rng(seed);
    fill_normal(layout_.view(params_, embedding_id_), rng, 1.0);
    for (Index s = 0; s < config_.stages; ++s) {
        const Index cin = s == 0 ? config_.embed_dim : config_.filters;
        fill_normal(layout_.view(params_, conv_w_[static_cast<std::size_t>(s)]), rng,
                    1.0 / std::sqrt(static_cast<Scalar>(3 * cin)));
    }
    fill_normal(layout_.view(params_, out_w_), rng, 1.0 / std::sqrt(static_cast<Scalar>(config_.filters)));
}

void HierNet::build_layout() {
    embedding_id_ = layout_.add("embedding", vocabulary_size, config_.embed_dim);
    for (Index s = 0; s < config_.stages; ++s) {
        const Index cin = s == 0 ? config_.embed_dim : config_.filters;
        conv_w_.push_back(layout_.add("conv" + std::to_string(s) + "_w", 3 * cin, config_.filters));
        conv_b_.push_back(layout_.add("conv" + std::to_string(s) + "_b", 1, config_.filters));
    }
    out_w_ = layout_.add("out_w", 1, config_.filters);
    out_b_ = layout_.add("out_b", 1, 1);
}

Scalar HierNet::logit(const Matrix& x, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    const auto stages = static_cast<std::size_t>(config_.stages);
    c.inputs.resize(stages);
    c.pre.resize(stages);
    c.winner.resize(stages);
    const Index F = config_.filters;

    Matrix in = x;
    for (std::size_t s = 0; s < stages; ++s) {
        const Index n = in.rows();
        const Index cin = in.cols();
        const auto W = layout_.view(params_, conv_w_[s]);
        Matrix pre = in * W.middleRows(cin, cin);
        pre.bottomRows(n - 1) += in.topRows(n - 1) * W.topRows(cin);
        pre.topRows(n - 1) += in.bottomRows(n - 1) * W.bottomRows(cin);
        pre.rowwise() += layout_.view(params_, conv_b_[s]).row(0);
        const Matrix act = config_.relu ? Matrix(pre.cwiseMax(0.0)) : pre;

        const Index m = n / 4;
        Matrix out(m, F);
        auto& winner = c.winner[s];
        winner.assign(static_cast<std::size_t>(m * F), 0);
        for (Index i = 0; i < m; ++i) {
            for (Index f = 0; f < F; ++f) {
                Index best = 4 * i;
                for (Index j = 1; j < 4; ++j) {
                    if (act(4 * i + j, f) > act(best, f)) {
                        best = 4 * i + j;
                    }
                }
                winner[static_cast<std::size_t>(i * F + f)] = best;
                out(i, f) = act(best, f);
            }
        }
        c.inputs[s] = std::move(in);
        c.pre[s] = std::move(pre);
        in = std::move(out);
    }
    c.pooled = in.colwise().mean().transpose();
    c.last = std::move(in);
    return layout_.view(params_, out_w_).row(0).dot(c.pooled) + layout_.view(params_, out_b_)(0, 0);
}

void HierNet::backward(const Cache& c, Scalar dlogit, Matrix* dx, Vector* dparams) const {
    const Index F = config_.filters;
    const Vector dpooled = dlogit * layout_.view(params_, out_w_).row(0).transpose();
    if (dparams) {
        layout_.view(*dparams, out_w_).row(0) += dlogit * c.pooled.transpose();
        layout_.view(*dparams, out_b_)(0, 0) += dlogit;
    }
    Matrix dout(c.last.rows(), F);
    dout.rowwise() = dpooled.transpose() / static_cast<Scalar>(c.last.rows());

    for (std::size_t s = c.inputs.size(); s-- > 0;) {
        const Matrix& in = c.inputs[s];
        const Matrix& pre = c.pre[s];
        const Index n = in.rows();
        const Index cin = in.cols();
        Matrix dpre = Matrix::Zero(n, F);
        const auto& winner = c.winner[s];
        for (Index i = 0; i < dout.rows(); ++i) {
            for (Index f = 0; f < F; ++f) {
                dpre(winner[static_cast<std::size_t>(i * F + f)], f) += dout(i, f);
            }
        }
        if (config_.relu) {
            dpre = dpre.cwiseProduct((pre.array() > 0.0).cast<Scalar>().matrix());
        }
        const auto W = layout_.view(params_, conv_w_[s]);
        if (dparams) {
            auto dW = layout_.view(*dparams, conv_w_[s]);
            dW.middleRows(cin, cin) += in.transpose() * dpre;
            dW.topRows(cin) += in.topRows(n - 1).transpose() * dpre.bottomRows(n - 1);
            dW.bottomRows(cin) += in.bottomRows(n - 1).transpose() * dpre.topRows(n - 1);
            layout_.view(*dparams, conv_b_[s]).row(0) += dpre.colwise().sum();
        }
        if (s == 0 && !dx) {
            break;
        }
        Matrix din = dpre * W.middleRows(cin, cin).transpose();
        din.topRows(n - 1) += dpre.bottomRows(n - 1) * W.topRows(cin).transpose();
        din.bottomRows(n - 1) += dpre.topRows(n - 1) * W.bottomRows(cin).transpose();
        if (s == 0) {
            *dx += din;
        } else {
            dout = std::move(din);
        }
    }
}

// --- FeatureLinearModel -----------------------------------------------------

FeatureLinearModel::FeatureLinearModel() {
    mean_ = layout_.add("feature_mean", 1, feature_dimension);
    scale_ = layout_.add("feature_scale", 1, feature_dimension);
    weights_ = layout_.add("weights", 1, feature_dimension);
    bias_ = layout_.add("bias", 1, 1);
    params_ = Vector::Zero(layout_.size());
    layout_.view(params_, scale_).setOnes();
}

void FeatureLinearModel::set_standardization(const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
    layout_.view(params_, mean_).row(0) = mean.transpose();
    layout_.view(params_, scale_).row(0) = scale.transpose();
}

Eigen::VectorXd FeatureLinearModel::standardize(const Eigen::VectorXd& features) const {
    const auto mean = layout_.view(params_, mean_).row(0).transpose();
    const auto scale = layout_.view(params_, scale_).row(0).transpose();
    return (features - mean).cwiseQuotient(scale);
}

Scalar FeatureLinearModel::logit(const Eigen::VectorXd& features) const {
    return layout_.view(params_, weights_).row(0).dot(standardize(features)) + params_(layout_.block(bias_).offset);
}

// --- Classifier -------------------------------------------------------------

Classifier Classifier::create(ModelKind kind, std::uint64_t seed, const ModelOptions& options) {
    Classifier c;
    c.kind_ = kind;
    switch (kind) {
        case ModelKind::ToyMalConv: {
            MalConvNet::Config cfg;
            cfg.window = options.window.value_or(cfg.window);
            cfg.filters = options.filters.value_or(cfg.filters);
            cfg.hidden = options.hidden.value_or(cfg.hidden);
            c.model_ = MalConvNet(cfg, seed);
            break;
        }
        case ModelKind::ToyHierLin:
        case ModelKind::ToyHierReLU: {
            HierNet::Config cfg;
            cfg.window = options.window.value_or(cfg.window);
            cfg.filters = options.filters.value_or(cfg.filters);
            cfg.relu = kind == ModelKind::ToyHierReLU;
            c.model_ = HierNet(cfg, seed);
            break;
        }
        case ModelKind::HandCrafted:
            c.model_ = FeatureLinearModel();
            break;
    }
    return c;
}

std::vector<std::pair<std::string, Index>> Classifier::hyperparameters() const {
    if (const auto* m = malconv()) {
        const auto& c = m->config();
        return {{"window", c.window}, {"kernel", c.kernel}, {"embed_dim", c.embed_dim},
                {"filters", c.filters}, {"hidden", c.hidden}};
    }
    if (const auto* h = hier()) {
        const auto& c = h->config();
        return {{"window", c.window}, {"embed_dim", c.embed_dim}, {"filters", c.filters},
                {"stages", c.stages}, {"relu", c.relu ? 1 : 0}};
    }
    return {{"features", feature_dimension}};
}

Classifier Classifier::from_hyperparameters(ModelKind kind, const std::vector<std::pair<std::string, Index>>& hp) {
    auto get = [&](std::string_view key, Index fallback) {
        for (const auto& [k, v] : hp) {
            if (k == key) {
                return v;
            }
        }
        return fallback;
    };
    Classifier c;
    c.kind_ = kind;
    switch (kind) {
        case ModelKind::ToyMalConv: {
            MalConvNet::Config cfg;
            cfg.window = get("window", cfg.window);
            cfg.kernel = get("kernel", cfg.kernel);
            cfg.embed_dim = get("embed_dim", cfg.embed_dim);
            cfg.filters = get("filters", cfg.filters);
            cfg.hidden = get("hidden", cfg.hidden);
            c.model_ = MalConvNet(cfg, 0);
            break;
        }
        case ModelKind::ToyHierLin:
        case ModelKind::ToyHierReLU: {
            HierNet::Config cfg;
            cfg.window = get("window", cfg.window);
            cfg.embed_dim = get("embed_dim", cfg.embed_dim);
            cfg.filters = get("filters", cfg.filters);
            cfg.stages = get("stages", cfg.stages);
            cfg.relu = kind == ModelKind::ToyHierReLU;
            c.model_ = HierNet(cfg, 0);
            break;
        }
        case ModelKind::HandCrafted:
            if (get("features", feature_dimension) != feature_dimension) {
                throw Error(ErrorCode::ModelFormat, "feature dimension mismatch");
            }
            c.model_ = FeatureLinearModel();
            break;
    }
    return c;
}

Index Classifier::window() const {
    if (const auto* m = malconv()) {
        return m->config().window;
    }
    if (const auto* h = hier()) {
        return h->config().window;
    }
    return 0;
}

const ParameterLayout& Classifier::layout() const {
    return std::visit([](const auto& m) -> const ParameterLayout& { return m.layout(); }, model_);
}

Vector& Classifier::parameters() {
    return std::visit([](auto& m) -> Vector& { return m.parameters(); }, model_);
}

const Vector& Classifier::parameters() const {
    return std::visit([](const auto& m) -> const Vector& { return m.parameters(); }, model_);
}

Matrix Classifier::embedding_table() const {
    if (const auto* m = malconv()) {
        return m->embedding();
    }
    if (const auto* h = hier()) {
        return h->embedding();
    }
    throw Error(ErrorCode::NotDifferentiable, "hand-crafted model has no embedding");
}

Matrix Classifier::embed(ByteView bytes) const {
    const Matrix E = embedding_table();
    const Index L = window();
    Matrix x(L, E.cols());
    const Index n = std::min<Index>(L, static_cast<Index>(bytes.size()));
    for (Index i = 0; i < n; ++i) {
        x.row(i) = E.row(bytes[static_cast<std::size_t>(i)]);
    }
    if (n < L) {
        x.bottomRows(L - n).rowwise() = E.row(padding_token);
    }
    return x;
}

void Classifier::check_shape(const Matrix& x) const {
    if (!differentiable()) {
        throw Error(ErrorCode::NotDifferentiable, "hand-crafted model works on bytes, not embeddings");
    }
    const Index d = malconv() ? malconv()->config().embed_dim : hier()->config().embed_dim;
    if (x.rows() != window() || x.cols() != d) {
        throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(window()) + "x" + std::to_string(d) +
                                                  " input, got " + std::to_string(x.rows()) + "x" +
                                                  std::to_string(x.cols()));
    }
}

Scalar Classifier::forward(const Matrix& x) const {
    check_shape(x);
    if (const auto* m = malconv()) {
        return sigmoid(m->logit(x));
    }
    return sigmoid(hier()->logit(x));
}

Scalar Classifier::score_and_gradient(const Matrix& x, Matrix& grad) const {
    check_shape(x);
    grad = Matrix::Zero(x.rows(), x.cols());
    if (const auto* m = malconv()) {
        MalConvNet::Cache cache;
        const Scalar s = sigmoid(m->logit(x, &cache));
        m->backward(cache, s * (1.0 - s), &grad, nullptr);
        return s;
    }
    const auto* h = hier();
    HierNet::Cache cache;
    const Scalar s = sigmoid(h->logit(x, &cache));
    h->backward(cache, s * (1.0 - s), &grad, nullptr);
    return s;
}

Matrix Classifier::gradient(const Matrix& x) const {
    Matrix grad;
    score_and_gradient(x, grad);
    return grad;
}

Scalar Classifier::score(ByteView bytes) const {
    if (const auto* lin = linear()) {
        return sigmoid(lin->logit(extract_features(bytes)));
    }
    return forward(embed(bytes));
}

bool Classifier::detects(ByteView bytes) const {
    if (!threshold_) {
        throw Error(ErrorCode::UncalibratedTarget, std::string(to_string(kind_)) + " has no threshold");
    }
    return score(bytes) >= *threshold_;
}

// --- training ---------------------------------------------------------------

namespace {

double accuracy(const Classifier& model, std::span<const LabeledBytes> samples) {
    if (samples.empty()) {
        return 0.0;
    }
    std::size_t correct = 0;
    for (const auto& s : samples) {
        correct += ((model.score(s.bytes) >= 0.5) == (s.label == 1)) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

void train_linear(Classifier& model, std::span<const LabeledBytes> train_set, const TrainConfig& cfg) {
    auto& lin = *model.linear();
    const auto n = static_cast<Index>(train_set.size());
    Eigen::MatrixXd feats(n, feature_dimension);
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
        feats.row(i) = extract_features(train_set[static_cast<std::size_t>(i)].bytes).transpose();
        y(i) = train_set[static_cast<std::size_t>(i)].label;
    }
    const Eigen::VectorXd mean = feats.colwise().mean().transpose();
    Eigen::VectorXd scale =
        ((feats.rowwise() - mean.transpose()).array().square().colwise().sum() / static_cast<double>(n)).sqrt().transpose();
    scale = scale.unaryExpr([](double v) { return v < 1e-8 ? 1.0 : v; });
    lin.set_standardization(mean, scale);
    const Eigen::MatrixXd z = (feats.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();

    Vector w = Vector::Zero(feature_dimension + 1);
    Adam adam(w.size(), 0.05, 0.0);
    const std::size_t steps = std::max<std::size_t>(cfg.epochs, 1) * 40;
    for (std::size_t it = 0; it < steps; ++it) {
        const Eigen::VectorXd logits = (z * w.head(feature_dimension)).array() + w(feature_dimension);
        const Eigen::VectorXd r = sigmoid(logits.array()).matrix() - y;
        Vector g(w.size());
        g.head(feature_dimension) = z.transpose() * r / static_cast<double>(n) + 1e-3 * w.head(feature_dimension);
        g(feature_dimension) = r.mean();
        adam.step(w, g);
    }
    lin.weights().row(0) = w.head(feature_dimension).transpose();
    lin.bias() = w(feature_dimension);
}

template <typename Net>
void train_embedding_net(Net& net, const Classifier& model, std::span<const LabeledBytes> train_set,
                         const TrainConfig& cfg) {
    Adam adam(net.layout().size(), cfg.learning_rate, cfg.weight_decay);
    Rng rng(cfg.seed ^ 0x5eedULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const auto& emb_block = net.layout().block(0);

    Vector grad(net.layout().size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            grad.setZero();
            for (std::size_t k = start; k < end; ++k) {
                const auto& sample = train_set[order[k]];
                const Matrix x = model.embed(sample.bytes);
                typename Net::Cache cache;
                const Scalar s = sigmoid(net.logit(x, &cache));
                Matrix dx = Matrix::Zero(x.rows(), x.cols());
                net.backward(cache, s - static_cast<Scalar>(sample.label), &dx, &grad);
                Eigen::Map<Matrix> dE(grad.data() + emb_block.offset, emb_block.rows, emb_block.cols);
                const Index n = std::min<Index>(x.rows(), static_cast<Index>(sample.bytes.size()));
                for (Index r = 0; r < n; ++r) {
                    dE.row(sample.bytes[static_cast<std::size_t>(r)]) += dx.row(r);
                }
                if (n < x.rows()) {
                    dE.row(padding_token) += dx.bottomRows(x.rows() - n).colwise().sum();
                }
            }
            grad /= static_cast<Scalar>(end - start);
            adam.step(net.parameters(), grad);
        }
    }
}

}  // namespace

TrainResult train(std::span<const LabeledBytes> corpus, ModelKind kind, const TrainConfig& cfg) {
    const auto positives = std::count_if(corpus.begin(), corpus.end(), [](const auto& s) { return s.label == 1; });
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(corpus.size())) {
        throw Error(ErrorCode::DegenerateCorpus, "training corpus needs both classes");
    }
    std::vector<LabeledBytes> train_set, validation;
    std::size_t seen[2] = {0, 0};
    for (const auto& s : corpus) {
        auto& counter = seen[s.label == 1 ? 1 : 0];
        const bool hold_out = cfg.validation_every > 0 && counter % cfg.validation_every == cfg.validation_every - 1;
        (hold_out ? validation : train_set).push_back(s);
        ++counter;
    }

    TrainResult result{Classifier::create(kind, cfg.seed, cfg.model)};
    if (auto* lin = result.model.linear()) {
        (void)lin;
        train_linear(result.model, train_set, cfg);
    } else if (auto* m = result.model.malconv()) {
        train_embedding_net(*m, result.model, train_set, cfg);
    } else {
        train_embedding_net(*result.model.hier(), result.model, train_set, cfg);
    }
    result.train_accuracy = accuracy(result.model, train_set);
    result.validation_accuracy = accuracy(result.model, validation);
    return result;
}

}  // namespace advpe
