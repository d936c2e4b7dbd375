#pragma once

#include <cmath>
#include <vector>

#include "spamoe/autodiff.hpp"
#include "spamoe/fft.hpp"
#include "spamoe/router.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

struct LossWeights {
    double grad_l1 = 0.15;
    double fourier_l1 = 0.10;
    double load_balance = 0.20;
    double router_l1 = 0.60;
    double router_l2 = 0.40;
};

struct LossBreakdown {
    double total = 0.0;
    double mae = 0.0;
    double grad_l1 = 0.0;
    double fourier_l1 = 0.0;
    double load_balance = 0.0;
    double router_l1 = 0.0;
    double router_l2 = 0.0;
};

/// Batch-level routing summary for the regularizer terms: per-expert summed
/// gate weights (importance) and the moment statistics of the raw logits.
struct RouterBatchStats {
    std::vector<double> importance;
    double mean_abs_logit = 0.0;
    double mean_sq_logit = 0.0;

    static RouterBatchStats from_decisions(const std::vector<RouterDecision>& ds, int n_experts) {
        RouterBatchStats s;
        s.importance.assign(n_experts, 0.0);
        if (ds.empty()) return s;
        double abs_sum = 0.0, sq_sum = 0.0;
        long n_logits = 0;
        for (const auto& d : ds) {
            for (std::size_t i = 0; i < d.selected.size(); ++i)
                s.importance[d.selected[i]] += d.alpha[i];
            for (double g : d.logits) {
                abs_sum += std::abs(g);
                sq_sum += g * g;
                ++n_logits;
            }
        }
        s.mean_abs_logit = abs_sum / n_logits;
        s.mean_sq_logit = sq_sum / n_logits;
        return s;
    }
};

/// Squared coefficient of variation of the importance vector (population
/// variance over squared mean); zero when traffic is perfectly balanced.
inline double load_balance_cv2(const std::vector<double>& importance) {
    if (importance.empty()) return 0.0;
    double mean = 0.0;
    for (double x : importance) mean += x;
    mean /= importance.size();
    if (mean == 0.0) return 0.0;
    double var = 0.0;
    for (double x : importance) var += (x - mean) * (x - mean);
    var /= importance.size();
    return var / (mean * mean);
}

namespace lossdetail {

inline double mae(const Field2D& a, const Field2D& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += std::abs(a.v[i] - b.v[i]);
    return s / a.v.size();
}

inline double grad_l1(const Field2D& a, const Field2D& b) {
    // forward differences along both axes, each averaged over its own extent
    double row_sum = 0.0;
    for (int i = 0; i + 1 < a.h; ++i)
        for (int j = 0; j < a.w; ++j)
            row_sum += std::abs((a.at(i + 1, j) - a.at(i, j)) - (b.at(i + 1, j) - b.at(i, j)));
    double col_sum = 0.0;
    for (int i = 0; i < a.h; ++i)
        for (int j = 0; j + 1 < a.w; ++j)
            col_sum += std::abs((a.at(i, j + 1) - a.at(i, j)) - (b.at(i, j + 1) - b.at(i, j)));
    return row_sum / (static_cast<double>(a.h - 1) * a.w) +
           col_sum / (static_cast<double>(a.h) * (a.w - 1));
}

inline double fourier_l1(const Field2D& a, const Field2D& b) {
    Spectrum2D sa = dft_centered(a);
    Spectrum2D sb = dft_centered(b);
    double s = 0.0;
    for (std::size_t i = 0; i < sa.v.size(); ++i) s += std::abs(std::abs(sa.v[i]) - std::abs(sb.v[i]));
    return s / sa.v.size();
}

}  // namespace lossdetail

/// Composite objective:
///   total = MAE + w.grad * L1 of forward-difference gradients
///         + w.fourier * L1 of centered spectrum magnitudes
///         + w.balance * CV^2 of batch expert importance
///         + w.l1 * mean|logit| + w.l2 * mean logit^2
inline LossBreakdown composite_loss(const Field2D& pred, const Field2D& target,
                                    const RouterBatchStats& stats, const LossWeights& w) {
    require_same_shape(pred, target, "composite_loss");
    LossBreakdown b;
    b.mae = lossdetail::mae(pred, target);
    b.grad_l1 = lossdetail::grad_l1(pred, target);
    b.fourier_l1 = lossdetail::fourier_l1(pred, target);
    b.load_balance = load_balance_cv2(stats.importance);
    b.router_l1 = stats.mean_abs_logit;
    b.router_l2 = stats.mean_sq_logit;
    b.total = b.mae + w.grad_l1 * b.grad_l1 + w.fourier_l1 * b.fourier_l1 +
              w.load_balance * b.load_balance + w.router_l1 * b.router_l1 +
              w.router_l2 * b.router_l2;
    return b;
}

// ---- tape construction over a batch ----

struct BatchLossNodes {
    int total = -1;
    int mae = -1, grad = -1, fourier = -1, balance = -1, r_l1 = -1, r_l2 = -1;
};

/// Builds the composite loss over a batch already on the tape. preds and
/// targets are [h, w] nodes; dense_alphas are [n_experts] gate vectors and
/// logits the raw router outputs, one per sample.
inline BatchLossNodes composite_loss_tape(ad::Tape& t, const std::vector<int>& preds,
                                          const std::vector<int>& targets,
                                          const std::vector<int>& dense_alphas,
                                          const std::vector<int>& logits, const LossWeights& w) {
    if (preds.empty() || preds.size() != targets.size() || preds.size() != dense_alphas.size() ||
        preds.size() != logits.size())
        throw InvalidInput("composite_loss_tape: batch size mismatch");
    const std::size_t batch = preds.size();
    std::vector<int> mae_terms, grad_terms, fourier_terms, l1_terms, l2_terms;
    for (std::size_t s = 0; s < batch; ++s) {
        int diff = ad::sub(t, preds[s], targets[s]);
        mae_terms.push_back(ad::mean_all(t, ad::abs_val(t, diff)));

        int dr = ad::sub(t, ad::diff_rows(t, preds[s]), ad::diff_rows(t, targets[s]));
        int dc = ad::sub(t, ad::diff_cols(t, preds[s]), ad::diff_cols(t, targets[s]));
        int gterm = ad::wsum(t,
                             {ad::mean_all(t, ad::abs_val(t, dr)), ad::mean_all(t, ad::abs_val(t, dc))},
                             {1.0, 1.0});
        grad_terms.push_back(gterm);

        const auto& dims = t.val(preds[s]).dims;
        int p3 = ad::reshape(t, preds[s], {1, dims[0], dims[1]});
        int t3 = ad::reshape(t, targets[s], {1, dims[0], dims[1]});
        int dmag = ad::sub(t, ad::magnitude(t, ad::dft2(t, p3)), ad::magnitude(t, ad::dft2(t, t3)));
        fourier_terms.push_back(ad::mean_all(t, ad::abs_val(t, dmag)));

        l1_terms.push_back(ad::mean_all(t, ad::abs_val(t, logits[s])));
        l2_terms.push_back(ad::mean_all(t, ad::square(t, logits[s])));
    }
    std::vector<double> avg(batch, 1.0 / batch);
    BatchLossNodes nodes;
    nodes.mae = ad::wsum(t, mae_terms, avg);
    nodes.grad = ad::wsum(t, grad_terms, avg);
    nodes.fourier = ad::wsum(t, fourier_terms, avg);
    nodes.r_l1 = ad::wsum(t, l1_terms, avg);
    nodes.r_l2 = ad::wsum(t, l2_terms, avg);

    // batch importance: sum of dense gate vectors, then CV^2
    int importance = dense_alphas[0];
    for (std::size_t s = 1; s < batch; ++s) importance = ad::add(t, importance, dense_alphas[s]);
    int mean_imp = ad::mean_all(t, importance);
    int mean_sq = ad::mean_all(t, ad::square(t, importance));
    int mean_imp_sq = ad::square(t, mean_imp);
    int variance = ad::sub(t, mean_sq, mean_imp_sq);
    nodes.balance = ad::div_scalar(t, variance, mean_imp_sq);

    nodes.total = ad::wsum(
        t, {nodes.mae, nodes.grad, nodes.fourier, nodes.balance, nodes.r_l1, nodes.r_l2},
        {1.0, w.grad_l1, w.fourier_l1, w.load_balance, w.router_l1, w.router_l2});
    return nodes;
}

inline LossBreakdown breakdown_from_nodes(const ad::Tape& t, const BatchLossNodes& n) {
    LossBreakdown b;
    b.total = t.val(n.total).re[0];
    b.mae = t.val(n.mae).re[0];
    b.grad_l1 = t.val(n.grad).re[0];
    b.fourier_l1 = t.val(n.fourier).re[0];
    b.load_balance = t.val(n.balance).re[0];
    b.router_l1 = t.val(n.r_l1).re[0];
    b.router_l2 = t.val(n.r_l2).re[0];
    return b;
}

}  // namespace spamoe
