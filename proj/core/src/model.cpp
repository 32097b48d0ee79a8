#include "creff/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace creff {

namespace {

constexpr double kLogEps = 1e-12;

void apply_activation(Matrix& m, Activation act) {
    switch (act) {
        case Activation::identity: return;
        case Activation::tanh:
            for (double& v : m.data) v = std::tanh(v);
            return;
        case Activation::relu:
            for (double& v : m.data) v = v > 0.0 ? v : 0.0;
            return;
    }
}

// Softmax rows of logits into a fresh matrix.
Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* in = logits.row(i);
        double* out = p.row(i);
        double mx = in[0];
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        for (std::size_t j = 0; j < logits.cols; ++j) out[j] /= sum;
    }
    return p;
}

void check_labels(const std::vector<int>& labels, std::size_t n, std::size_t num_classes,
                  const char* what) {
    if (labels.size() != n) {
        throw std::invalid_argument(std::string(what) + ": label count " +
                                    std::to_string(labels.size()) + " does not match rows " +
                                    std::to_string(n));
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw std::invalid_argument(std::string(what) + ": label " + std::to_string(y) +
                                        " out of range [0, " + std::to_string(num_classes) + ")");
        }
    }
}

}  // namespace

bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.extractor.size() != b.extractor.size()) return false;
    for (std::size_t l = 0; l < a.extractor.size(); ++l) {
        if (a.extractor[l].act != b.extractor[l].act) return false;
        if (!(a.extractor[l].weight == b.extractor[l].weight)) return false;
    }
    return a.classifier == b.classifier;
}

ModelParams init_model(const std::vector<std::size_t>& layer_dims, std::size_t num_classes,
                       RngStream& rng, Activation hidden_act) {
    if (layer_dims.size() < 2) {
        throw std::invalid_argument("init_model: need at least input and feature dims");
    }
    ModelParams params;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        ExtractorLayer layer;
        layer.weight = Matrix(fan_out, fan_in);
        // Hidden layers use the requested nonlinearity; the feature head is a
        // bounded tanh embedding, which keeps feature norms comparable across
        // clients regardless of how far local training drifts.
        layer.act = l + 2 < layer_dims.size() ? hidden_act : Activation::tanh;
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& w : layer.weight.data) w = scale * rng.normal();
        params.extractor.push_back(std::move(layer));
    }
    const std::size_t d = layer_dims.back();
    params.classifier = Matrix(num_classes, d);
    const double cscale = std::sqrt(1.0 / static_cast<double>(d));
    for (double& w : params.classifier.data) w = cscale * rng.normal();
    return params;
}

void check_model_shapes(const ModelParams& params) {
    std::size_t dim = params.input_dim();
    for (std::size_t l = 0; l < params.extractor.size(); ++l) {
        const Matrix& w = params.extractor[l].weight;
        if (w.cols != dim) {
            throw std::invalid_argument("model: layer " + std::to_string(l) +
                                        " input dim " + std::to_string(w.cols) +
                                        " does not chain from " + std::to_string(dim));
        }
        dim = w.rows;
    }
    if (params.classifier.cols != dim) {
        throw std::invalid_argument("model: classifier cols " +
                                    std::to_string(params.classifier.cols) +
                                    " do not match extractor output " + std::to_string(dim));
    }
}

Matrix extractor_forward(const std::vector<ExtractorLayer>& layers, const Matrix& batch) {
    if (!layers.empty() && batch.cols != layers.front().weight.cols) {
        throw std::invalid_argument("extractor_forward: batch cols " +
                                    std::to_string(batch.cols) + " do not match input dim " +
                                    std::to_string(layers.front().weight.cols));
    }
    Matrix act = batch;
    for (const ExtractorLayer& layer : layers) {
        act = matmul_bt(act, layer.weight);
        apply_activation(act, layer.act);
    }
    ensure_finite(act, "extractor_forward");
    return act;
}

Matrix extractor_forward(const ModelParams& params, const Matrix& batch) {
    check_model_shapes(params);
    if (batch.cols != params.input_dim()) {
        throw std::invalid_argument("extractor_forward: batch cols " +
                                    std::to_string(batch.cols) + " do not match input dim " +
                                    std::to_string(params.input_dim()));
    }
    return extractor_forward(params.extractor, batch);
}

Matrix classifier_logits(const Matrix& classifier, const Matrix& features) {
    if (features.cols != classifier.cols) {
        throw std::invalid_argument("classifier_logits: feature dim " +
                                    std::to_string(features.cols) + " does not match classifier " +
                                    std::to_string(classifier.cols));
    }
    Matrix logits = matmul_bt(features, classifier);
    ensure_finite(logits, "classifier_logits");
    return logits;
}

SoftmaxCeResult softmax_ce(const Matrix& logits, const std::vector<int>& labels) {
    check_labels(labels, logits.rows, logits.cols, "softmax_ce");
    if (logits.rows == 0) throw std::invalid_argument("softmax_ce: empty batch");
    const double inv_n = 1.0 / static_cast<double>(logits.rows);
    Matrix p = softmax_rows(logits);
    double loss = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        loss -= std::log(std::max(p(i, static_cast<std::size_t>(labels[i])), kLogEps));
    }
    loss *= inv_n;
    Matrix dlogits = std::move(p);
    for (std::size_t i = 0; i < dlogits.rows; ++i) {
        dlogits(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (std::size_t j = 0; j < dlogits.cols; ++j) dlogits(i, j) *= inv_n;
    }
    ensure_finite(dlogits, "softmax_ce");
    return {loss, std::move(dlogits)};
}

Matrix classifier_grad(const Matrix& classifier, const Matrix& features,
                       const std::vector<int>& labels) {
    if (features.rows == 0) throw std::invalid_argument("classifier_grad: empty feature set");
    if (features.cols != classifier.cols) {
        throw std::invalid_argument("classifier_grad: feature dim does not match classifier");
    }
    check_labels(labels, features.rows, classifier.rows, "classifier_grad");
    Matrix p = softmax_rows(matmul_bt(features, classifier));
    const double inv_n = 1.0 / static_cast<double>(features.rows);
    for (std::size_t i = 0; i < p.rows; ++i) {
        p(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (std::size_t j = 0; j < p.cols; ++j) p(i, j) *= inv_n;
    }
    Matrix grad = matmul_tn(p, features);  // C x d
    ensure_finite(grad, "classifier_grad");
    return grad;
}

BackwardResult model_backward(const ModelParams& params, const Matrix& batch,
                              const std::vector<int>& labels) {
    check_model_shapes(params);
    if (batch.cols != params.input_dim()) {
        throw std::invalid_argument("model_backward: batch cols do not match input dim");
    }
    // Forward, caching each layer's activation output.
    std::vector<Matrix> acts;
    acts.reserve(params.extractor.size() + 1);
    acts.push_back(batch);
    for (const ExtractorLayer& layer : params.extractor) {
        Matrix z = matmul_bt(acts.back(), layer.weight);
        apply_activation(z, layer.act);
        acts.push_back(std::move(z));
    }
    const Matrix& features = acts.back();
    Matrix logits = matmul_bt(features, params.classifier);
    auto [loss, dlogits] = softmax_ce(logits, labels);

    BackwardResult out;
    out.loss = loss;
    out.grads.classifier = matmul_tn(dlogits, features);
    out.grads.extractor.resize(params.extractor.size());

    Matrix dact = matmul(dlogits, params.classifier);  // n x d
    for (std::size_t l = params.extractor.size(); l-- > 0;) {
        // Activations were applied in place, so the stored outputs determine
        // the local derivative (ReLU: active iff output > 0; tanh: 1 - a^2).
        if (params.extractor[l].act == Activation::relu) {
            const Matrix& a = acts[l + 1];
            for (std::size_t i = 0; i < dact.data.size(); ++i) {
                if (a.data[i] <= 0.0) dact.data[i] = 0.0;
            }
        } else if (params.extractor[l].act == Activation::tanh) {
            const Matrix& a = acts[l + 1];
            for (std::size_t i = 0; i < dact.data.size(); ++i) {
                dact.data[i] *= 1.0 - a.data[i] * a.data[i];
            }
        }
        out.grads.extractor[l] = matmul_tn(dact, acts[l]);
        if (l > 0) dact = matmul(dact, params.extractor[l].weight);
    }
    for (const Matrix& g : out.grads.extractor) ensure_finite(g, "model_backward");
    ensure_finite(out.grads.classifier, "model_backward");
    return out;
}

Matrix sgd_step(const Matrix& params, const Matrix& grad, double lr) {
    if (!params.same_shape(grad)) throw std::invalid_argument("sgd_step: shape mismatch");
    if (lr < 0.0) throw std::invalid_argument("sgd_step: negative learning rate");
    if (lr == 0.0) return params;
    return add_scaled(params, grad, -lr);
}

ModelParams sgd_step(const ModelParams& params, const Gradients& grads, double lr) {
    if (grads.extractor.size() != params.extractor.size()) {
        throw std::invalid_argument("sgd_step: gradient layer count mismatch");
    }
    ModelParams out = params;
    for (std::size_t l = 0; l < out.extractor.size(); ++l) {
        out.extractor[l].weight = sgd_step(params.extractor[l].weight, grads.extractor[l], lr);
    }
    out.classifier = sgd_step(params.classifier, grads.classifier, lr);
    return out;
}

double matching_loss(const Matrix& g_fed, const Matrix& g_agg) {
    if (!g_fed.same_shape(g_agg)) throw std::invalid_argument("matching_loss: shape mismatch");
    if (g_fed.rows == 0) throw std::invalid_argument("matching_loss: empty gradient");
    double total = 0.0;
    for (std::size_t j = 0; j < g_fed.rows; ++j) {
        const double na = l2_norm(g_fed.row(j), g_fed.cols);
        const double nb = l2_norm(g_agg.row(j), g_agg.cols);
        if (na == 0.0 && nb == 0.0) continue;        // matched absence of signal
        if (na == 0.0 || nb == 0.0) total += 1.0;    // unexplained mismatch
        else total += 1.0 - dot(g_fed.row(j), g_agg.row(j), g_fed.cols) / (na * nb);
    }
    return total / static_cast<double>(g_fed.rows);
}

Matrix matching_grad_wrt_features(const Matrix& classifier, const Matrix& features_c,
                                  int class_id, const Matrix& g_target) {
    const std::size_t num_classes = classifier.rows;
    const std::size_t d = classifier.cols;
    const std::size_t m = features_c.rows;
    if (m == 0) throw std::invalid_argument("matching_grad_wrt_features: empty feature set");
    if (features_c.cols != d) {
        throw std::invalid_argument("matching_grad_wrt_features: feature dim mismatch");
    }
    check_shape(g_target, num_classes, d, "matching_grad_wrt_features: g_target");
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= num_classes) {
        throw std::invalid_argument("matching_grad_wrt_features: class id out of range");
    }

    const double inv_m = 1.0 / static_cast<double>(m);

    // Residuals r_i = softmax(v s_i) - e_c and the feature gradient G.
    Matrix probs(m, num_classes);
    {
        Matrix logits = matmul_bt(features_c, classifier);
        for (std::size_t i = 0; i < m; ++i) {
            const double* in = logits.row(i);
            double* out = probs.row(i);
            double mx = in[0];
            for (std::size_t j = 1; j < num_classes; ++j) mx = std::max(mx, in[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < num_classes; ++j) {
                out[j] = std::exp(in[j] - mx);
                sum += out[j];
            }
            for (std::size_t j = 0; j < num_classes; ++j) out[j] /= sum;
        }
    }
    Matrix resid = probs;
    for (std::size_t i = 0; i < m; ++i) resid(i, static_cast<std::size_t>(class_id)) -= 1.0;

    Matrix g_fed = matmul_tn(resid, features_c);  // C x d
    for (double& v : g_fed.data) v *= inv_m;

    // W = dD/dG, row-wise cosine-dissimilarity gradient. g_target is a
    // received constant; no gradient flows into it.
    Matrix w(num_classes, d);
    const double inv_c = 1.0 / static_cast<double>(num_classes);
    for (std::size_t j = 0; j < num_classes; ++j) {
        const double* g = g_fed.row(j);
        const double* a = g_target.row(j);
        const double ng = l2_norm(g, d);
        const double na = l2_norm(a, d);
        if (ng == 0.0 || na == 0.0) continue;  // convention: no gradient from degenerate rows
        const double ga = dot(g, a, d);
        const double scale = -inv_c / (ng * na);
        const double proj = ga / (ng * ng);
        double* wj = w.row(j);
        for (std::size_t b = 0; b < d; ++b) wj[b] = scale * (a[b] - proj * g[b]);
    }

    // Chain rule into each feature row:
    //   dD/ds_i = (1/m) [ W^T r_i  +  v^T (p_i (*) q_i - (p_i . q_i) p_i) ]
    // where q_i = W s_i and the second term is the softmax Jacobian path.
    Matrix grad(m, d);
    std::vector<double> q(num_classes);
    std::vector<double> jq(num_classes);
    for (std::size_t i = 0; i < m; ++i) {
        const double* s = features_c.row(i);
        const double* p = probs.row(i);
        const double* r = resid.row(i);
        for (std::size_t j = 0; j < num_classes; ++j) q[j] = dot(w.row(j), s, d);
        double pq = 0.0;
        for (std::size_t j = 0; j < num_classes; ++j) pq += p[j] * q[j];
        for (std::size_t j = 0; j < num_classes; ++j) jq[j] = p[j] * q[j] - pq * p[j];
        double* out = grad.row(i);
        for (std::size_t b = 0; b < d; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < num_classes; ++j) {
                acc += w(j, b) * r[j] + classifier(j, b) * jq[j];
            }
            out[b] = inv_m * acc;
        }
    }
    ensure_finite(grad, "matching_grad_wrt_features");
    return grad;
}

}  // namespace creff
