#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spamoe/loss.hpp"
#include "spamoe/metrics.hpp"
#include "spamoe/model.hpp"
#include "spamoe/optimizer.hpp"
#include "spamoe/schedule.hpp"
#include "spamoe/synth.hpp"

namespace spamoe {

struct DataConfig {
    FieldKind kind = FieldKind::layered;
    int samples = 64;
    int h = 32;
    int w = 32;
    int layers = 5;
    double fault_throw = 6.0;
    double curvature = 3.0;
    double slope = 0.0;
    ObserveMode observe = ObserveMode::identity;
    std::uint64_t seed = 1;
};

struct ToyDataset {
    std::vector<Field2D> fields;
    std::vector<Observation> observations;
};

inline ToyDataset make_toy_dataset(const DataConfig& d) {
    ToyDataset set;
    for (int i = 0; i < d.samples; ++i) {
        FieldSpec spec;
        spec.kind = d.kind;
        spec.h = d.h;
        spec.w = d.w;
        spec.layers = d.layers;
        spec.fault_throw = d.fault_throw;
        spec.curvature = d.curvature;
        spec.slope = d.slope;
        spec.seed = d.seed + static_cast<std::uint64_t>(i);
        set.fields.push_back(gen_field(spec));
        set.observations.push_back(toy_observe(set.fields.back(), d.observe));
    }
    return set;
}

struct TrainConfig {
    SpamoeConfig model;
    DataConfig data;
    int steps = 200;
    int batch = 8;
    double weight_decay = 1e-4;
    ScheduleConfig schedule;
    LossWeights weights;
    std::string out_dir;   // empty: nothing persisted
    int eval_samples = 16;  // per-epoch evaluation subset; 0 = whole dataset
};

struct StepLog {
    int step = 0;
    long epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;
};

struct EpochLog {
    long epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;  // last step of the epoch
    EvalMetrics metrics;
    std::vector<long> expert_usage;
};

struct TrainReport {
    std::vector<StepLog> steps;
    std::vector<EpochLog> epochs;
    EvalMetrics initial;
    EvalMetrics final_metrics;
    std::vector<long> expert_usage;  // selection counts over all training steps
};

namespace traindetail {

inline EvalMetrics evaluate(const SpamoeModel& m, const ToyDataset& data, int limit) {
    int n = limit > 0 ? std::min<int>(limit, data.fields.size())
                      : static_cast<int>(data.fields.size());
    EvalMetrics acc;
    for (int i = 0; i < n; ++i) {
        EvalMetrics one = eval_metrics(predict(m, data.observations[i]), data.fields[i]);
        acc.mae += one.mae;
        acc.rmse += one.rmse;
        acc.ssim += one.ssim;
    }
    acc.mae /= n;
    acc.rmse /= n;
    acc.ssim /= n;
    return acc;
}

inline void write_epoch_csv(const std::string& path, const std::vector<EpochLog>& epochs,
                            int n_experts) {
    std::ofstream os(path);
    if (!os) throw IoError(path + ": cannot open for writing");
    os << "epoch,lr,total,mae_term,grad_l1,fourier_l1,load_balance,router_l1,router_l2,"
          "mae,rmse,ssim";
    for (int e = 0; e < n_experts; ++e) os << ",expert" << e << "_usage";
    os << "\n";
    os.precision(12);
    for (const auto& ep : epochs) {
        os << ep.epoch << ',' << ep.lr << ',' << ep.loss.total << ',' << ep.loss.mae << ','
           << ep.loss.grad_l1 << ',' << ep.loss.fourier_l1 << ',' << ep.loss.load_balance << ','
           << ep.loss.router_l1 << ',' << ep.loss.router_l2 << ',' << ep.metrics.mae << ','
           << ep.metrics.rmse << ',' << ep.metrics.ssim;
        for (long u : ep.expert_usage) os << ',' << u;
        os << "\n";
    }
}

}  // namespace traindetail

/// Desk-scale training loop: deterministic in every respect (data order,
/// reduction order, single-threaded tape), so identical configurations give
/// bit-identical loss curves.
inline TrainReport train_toy(const TrainConfig& cfg) {
    if (cfg.batch < 1) throw InvalidConfig("train_toy: batch must be positive");
    if (cfg.steps < 0) throw InvalidConfig("train_toy: negative step count");
    SpamoeConfig mc = cfg.model;
    mc.out_h = cfg.data.h;
    mc.out_w = cfg.data.w;
    SpamoeModel model = build_model(mc);
    ToyDataset data = make_toy_dataset(cfg.data);

    TrainReport report;
    report.expert_usage.assign(SpamoeConfig::n_experts, 0);
    // initial/final metrics always cover the whole dataset; the per-epoch
    // log may use the configured subset to keep long runs cheap
    report.initial = traindetail::evaluate(model, data, 0);
    report.final_metrics = report.initial;

    AdamW opt(model.store);
    const int n = static_cast<int>(data.fields.size());
    const int steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    long epoch = 0;
    std::vector<long> epoch_usage(SpamoeConfig::n_experts, 0);
    LossBreakdown last_loss;

    for (int step = 0; step < cfg.steps; ++step) {
        epoch = step / steps_per_epoch;
        double lr = lr_at(epoch, cfg.schedule);
        model.store.zero_grads();
        ad::Tape tape;
        std::vector<int> preds, targets, dense_alphas, logits;
        for (int b = 0; b < cfg.batch; ++b) {
            int idx = (step * cfg.batch + b) % n;
            ForwardNodes fn = model_forward(tape, model, data.observations[idx]);
            preds.push_back(fn.y_hat);
            targets.push_back(ad::input_field(tape, data.fields[idx]));
            dense_alphas.push_back(fn.gates.dense_alpha);
            logits.push_back(fn.logits);
            for (int e : fn.gates.selected) {
                report.expert_usage[e]++;
                epoch_usage[e]++;
            }
        }
        BatchLossNodes loss = composite_loss_tape(tape, preds, targets, dense_alphas, logits,
                                                  cfg.weights);
        last_loss = breakdown_from_nodes(tape, loss);
        tape.backward(loss.total, model.store);
        opt.step(model.store, lr, cfg.weight_decay);
        report.steps.push_back(StepLog{step, epoch, lr, last_loss});

        bool epoch_end = (step + 1) % steps_per_epoch == 0 || step + 1 == cfg.steps;
        if (epoch_end) {
            EpochLog el;
            el.epoch = epoch;
            el.lr = lr;
            el.loss = last_loss;
            el.metrics = traindetail::evaluate(model, data, cfg.eval_samples);
            el.expert_usage = epoch_usage;
            report.epochs.push_back(el);
            std::fill(epoch_usage.begin(), epoch_usage.end(), 0);
        }
    }

    if (cfg.steps > 0) report.final_metrics = traindetail::evaluate(model, data, 0);

    if (!cfg.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.out_dir);
        save_checkpoint(model, (fs::path(cfg.out_dir) / "checkpoint").string());
        traindetail::write_epoch_csv((fs::path(cfg.out_dir) / "train_log.csv").string(),
                                     report.epochs, SpamoeConfig::n_experts);
    }
    return report;
}

}  // namespace spamoe
