#ifndef CREFF_MODEL_HPP
#define CREFF_MODEL_HPP

#include <cstddef>
#include <vector>

#include "creff/matrix.hpp"
#include "creff/rng.hpp"

namespace creff {

enum class Activation { relu, identity, tanh };

// One extractor layer: y = act(x W^T), no bias.
struct ExtractorLayer {
    Matrix weight;  // out x in
    Activation act = Activation::relu;
};

// Two-part model: feature extractor u (stack of layers mapping inputs to
// d-dim features) and linear classifier v (C x d, no bias).
struct ModelParams {
    std::vector<ExtractorLayer> extractor;
    Matrix classifier;

    std::size_t input_dim() const {
        return extractor.empty() ? classifier.cols : extractor.front().weight.cols;
    }
    std::size_t feature_dim() const { return classifier.cols; }
    std::size_t num_classes() const { return classifier.rows; }
};

bool operator==(const ModelParams& a, const ModelParams& b);

// Shape-mirror of ModelParams.
struct Gradients {
    std::vector<Matrix> extractor;
    Matrix classifier;
};

// layer_dims = {input_dim, hidden..., feature_dim}. Weights are drawn
// N(0, 2/fan_in) for the extractor and N(0, 1/d) for the classifier.
ModelParams init_model(const std::vector<std::size_t>& layer_dims, std::size_t num_classes,
                       RngStream& rng, Activation hidden_act = Activation::relu);

void check_model_shapes(const ModelParams& params);

// Feature rows z_i = f_u(x_i); batch is n x input_dim, result n x d.
Matrix extractor_forward(const ModelParams& params, const Matrix& batch);
Matrix extractor_forward(const std::vector<ExtractorLayer>& layers, const Matrix& batch);

// logits[i] = v z_i; features n x d, result n x C.
Matrix classifier_logits(const Matrix& classifier, const Matrix& features);

struct SoftmaxCeResult {
    double loss = 0.0;   // mean over rows of -log softmax(logit_i)[y_i]
    Matrix dlogits;      // (softmax(logit_i) - onehot(y_i)) / n
};

// Row-max-stabilised softmax cross-entropy; the log is clamped at 1e-12.
SoftmaxCeResult softmax_ce(const Matrix& logits, const std::vector<int>& labels);

// (1/n) sum_i (softmax(v z_i) - onehot(y_i)) z_i^T, the closed-form average
// gradient of softmax cross-entropy with respect to the classifier.
Matrix classifier_grad(const Matrix& classifier, const Matrix& features,
                       const std::vector<int>& labels);

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
};

// Full reverse pass: mean softmax-CE gradients for every extractor layer
// and the classifier.
BackwardResult model_backward(const ModelParams& params, const Matrix& batch,
                              const std::vector<int>& labels);

// out = in - lr * grad, elementwise.
Matrix sgd_step(const Matrix& params, const Matrix& grad, double lr);
ModelParams sgd_step(const ModelParams& params, const Gradients& grads, double lr);

// Mean row-wise cosine dissimilarity between two C x d gradient matrices:
// (1/C) sum_j (1 - cos(a[j], b[j])). Rows that are both zero contribute 0;
// a row pair with exactly one zero contributes 1.
double matching_loss(const Matrix& g_fed, const Matrix& g_agg);

// Exact gradient of matching_loss(g_fed(S_c), g_target) with respect to the
// federated features S_c (m x d), where
//   g_fed(S) = (1/m) sum_i (softmax(v s_i) - e_c) s_i^T.
// g_target is treated as a constant. Differentiates through the feature
// gradient, i.e. a second-order quantity; closed form, not a numeric
// approximation:
//   dD/ds_i = (1/m) [ W^T r_i + v^T (p_i (*) q_i - (p_i . q_i) p_i) ],
// with r_i = softmax(v s_i) - e_c, q_i = W s_i and W = dD/dG the per-row
// cosine-dissimilarity gradient (zero for rows where either side is zero).
Matrix matching_grad_wrt_features(const Matrix& classifier, const Matrix& features_c,
                                  int class_id, const Matrix& g_target);

}  // namespace creff

#endif  // CREFF_MODEL_HPP
