#include "kpshift/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "kpshift/errors.hpp"
#include "kpshift/rng.hpp"

namespace kpshift {

std::size_t Model::spatial_dim() const { return backbone.stage2.weight.extent(0); }

std::size_t Model::feature_dim() const { return classifier.weight.extent(1); }

std::size_t Model::temporal_dim() const {
    return use_kpsem ? feature_dim() - spatial_dim() : 0;
}

std::size_t Model::param_count() const {
    std::size_t n = backbone.param_count() + classifier.weight.size() + classifier.bias.size();
    if (use_kpsem) n += kpsem.param_count();
    return n;
}

Model init_model(const TrainConfig& cfg, std::size_t clip_frames) {
    if (cfg.kpsem_stage != 1 && cfg.kpsem_stage != 2)
        throw ConfigError("kpsem_stage must be 1 or 2");
    Model m;
    m.backbone = init_backbone(cfg.seed);
    m.use_kpsem = cfg.use_kpsem;
    m.kpsem_stage = cfg.kpsem_stage;
    m.kcfg.k = cfg.k;
    m.kcfg.sets = cfg.sets;
    m.kcfg.embed_dim = cfg.embed_dim;
    m.kcfg.epsilon = cfg.epsilon;
    std::size_t feat = m.backbone.stage2.weight.extent(0);
    if (cfg.use_kpsem) {
        if (clip_frames < 2) throw ConfigError("shift features need at least two frames");
        const std::size_t channels = cfg.kpsem_stage == 1 ? m.backbone.stage1.weight.extent(0)
                                                          : m.backbone.stage2.weight.extent(0);
        m.kpsem = init_kpsem_params(channels, m.kcfg, cfg.seed + 1);
        feat += (channels / 4) * (clip_frames - 1);
    }
    Rng rng(cfg.seed + 2);
    m.classifier.weight = Tensor::zeros({4, feat});
    const double bound = 1.0 / std::sqrt(static_cast<double>(feat));
    for (std::size_t i = 0; i < m.classifier.weight.size(); ++i)
        m.classifier.weight.data()[i] = rng.uniform(-bound, bound);
    m.classifier.bias = Tensor::zeros({4});
    return m;
}

namespace {

Tensor spatial_mean(const Tensor& f2) {
    const std::size_t c = f2.extent(0);
    const std::size_t n = f2.extent(1) * f2.extent(2) * f2.extent(3);
    Tensor out = Tensor::zeros({c});
    const double* d = f2.data();
    for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += d[ci * n + i];
        out.data()[ci] = acc / static_cast<double>(n);
    }
    return out;
}

double ce_from_logits(const Tensor& z, int label, Tensor& probs) {
    const double* d = z.data();
    double zmax = d[0];
    for (int c = 1; c < 4; ++c) zmax = std::max(zmax, d[c]);
    double lse = 0.0;
    probs = Tensor::zeros({4});
    for (int c = 0; c < 4; ++c) lse += std::exp(d[c] - zmax);
    for (int c = 0; c < 4; ++c) probs.data()[c] = std::exp(d[c] - zmax) / lse;
    return std::log(lse) + zmax - d[label];
}

struct ForwardState {
    BackboneTape bb;
    Tensor f1, f2;
    KpsemTape kp;
    Tensor features;
    Tensor logits;
    Tensor probs;
};

double forward_train(const Model& m, Mode mode, const SoftConfig& soft, const VideoSample& s,
                     ForwardState& fw) {
    if (s.label < 0 || s.label >= 4) throw ConfigError("class index out of range");
    const bool need1 = m.use_kpsem && m.kpsem_stage == 1;
    fw.f2 = backbone_forward(m.backbone, s.clip, &fw.bb, need1 ? &fw.f1 : nullptr);
    Tensor spatial = spatial_mean(fw.f2);
    if (m.use_kpsem) {
        const Tensor& fin = need1 ? fw.f1 : fw.f2;
        Tensor temporal = kpsem_forward_tape(fin, m.kpsem, m.kcfg, mode, soft, fw.kp);
        fw.features = fuse_features(spatial, temporal);
    } else {
        fw.features = std::move(spatial);
    }
    fw.logits = linear_forward(fw.features, m.classifier.weight, m.classifier.bias);
    return ce_from_logits(fw.logits, s.label, fw.probs);
}

void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

void accumulate_kpsem(KpsemGrads& dst, const KpsemGrads& src) {
    for (std::size_t g = 0; g < dst.nets.size(); ++g) {
        add_into(dst.nets[g].w1, src.nets[g].w1);
        add_into(dst.nets[g].b1, src.nets[g].b1);
        add_into(dst.nets[g].w2, src.nets[g].w2);
        add_into(dst.nets[g].b2, src.nets[g].b2);
    }
    for (std::size_t g = 0; g < dst.embeddings.size(); ++g) {
        add_into(dst.embeddings[g].weight, src.embeddings[g].weight);
        add_into(dst.embeddings[g].bias, src.embeddings[g].bias);
    }
    add_into(dst.conv1_w, src.conv1_w);
    add_into(dst.conv1_b, src.conv1_b);
    add_into(dst.conv2_w, src.conv2_w);
    add_into(dst.conv2_b, src.conv2_b);
}

struct Refs {
    std::vector<Tensor*> tensors;
    std::vector<char> trainable;
};

// KpsemParams and KpsemGrads share field names, so one collector keeps the
// model and gradient lists in lockstep.
template <class KP>
Refs collect_refs(TinyBackbone& bb, KP* kp, LinearLayer& cls, bool nets_trainable) {
    Refs r;
    auto push = [&r](Tensor& t, bool tr) {
        r.tensors.push_back(&t);
        r.trainable.push_back(tr ? 1 : 0);
    };
    push(bb.stage1.weight, true);
    push(bb.stage1.bias, true);
    push(bb.stage2.weight, true);
    push(bb.stage2.bias, true);
    if (kp) {
        for (auto& net : kp->nets) {
            push(net.w1, nets_trainable);
            push(net.b1, nets_trainable);
            push(net.w2, nets_trainable);
            push(net.b2, nets_trainable);
        }
        for (auto& e : kp->embeddings) {
            push(e.weight, true);
            push(e.bias, true);
        }
        push(kp->conv1_w, true);
        push(kp->conv1_b, true);
        push(kp->conv2_w, true);
        push(kp->conv2_b, true);
    }
    push(cls.weight, true);
    push(cls.bias, true);
    return r;
}

std::vector<std::size_t> stage_input_dims(const Model& m, const Tensor& clip) {
    const std::size_t frames = clip.extent(1);
    const std::size_t h1 = conv3x3_out_extent(clip.extent(2));
    const std::size_t w1 = conv3x3_out_extent(clip.extent(3));
    if (m.kpsem_stage == 1) return {m.backbone.stage1.weight.extent(0), frames, h1, w1};
    return {m.backbone.stage2.weight.extent(0), frames, conv3x3_out_extent(h1),
            conv3x3_out_extent(w1)};
}

}  // namespace

SampleGrads zero_sample_grads(const Model& m, const Tensor& clip) {
    SampleGrads g;
    g.backbone.stage1.weight = Tensor::zeros(m.backbone.stage1.weight.dims());
    g.backbone.stage1.bias = Tensor::zeros(m.backbone.stage1.bias.dims());
    g.backbone.stage2.weight = Tensor::zeros(m.backbone.stage2.weight.dims());
    g.backbone.stage2.bias = Tensor::zeros(m.backbone.stage2.bias.dims());
    if (m.use_kpsem) {
        const Tensor probe = Tensor::zeros(stage_input_dims(m, clip));
        g.kpsem = zero_grads_like(m.kpsem, probe);
    }
    g.classifier.weight = Tensor::zeros(m.classifier.weight.dims());
    g.classifier.bias = Tensor::zeros(m.classifier.bias.dims());
    return g;
}

double sample_loss_and_grads(const Model& m, Mode mode, const SoftConfig& soft,
                             const VideoSample& s, SampleGrads& g) {
    ForwardState fw;
    const double loss = forward_train(m, mode, soft, s, fw);
    Tensor dz = fw.probs;
    dz.data()[s.label] -= 1.0;
    Tensor dfeat = Tensor::zeros(fw.features.dims());
    linear_backward(fw.features, m.classifier.weight, dz, &dfeat, g.classifier.weight,
                    g.classifier.bias);
    const std::size_t sdim = m.spatial_dim();
    const std::size_t n = fw.f2.extent(1) * fw.f2.extent(2) * fw.f2.extent(3);
    Tensor df2 = Tensor::zeros(fw.f2.dims());
    for (std::size_t c = 0; c < sdim; ++c) {
        const double gc = dfeat.data()[c] / static_cast<double>(n);
        double* dst = df2.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] += gc;
    }
    Tensor df1_extra;
    bool have_df1 = false;
    if (m.use_kpsem) {
        const std::size_t tdim = m.temporal_dim();
        Tensor du = Tensor::zeros({tdim});
        for (std::size_t i = 0; i < tdim; ++i) du.data()[i] = dfeat.data()[sdim + i];
        KpsemGrads kg = kpsem_backward(fw.kp, m.kpsem, du);
        accumulate_kpsem(g.kpsem, kg);
        if (m.kpsem_stage == 1) {
            df1_extra = std::move(kg.input);
            have_df1 = true;
        } else {
            add_into(df2, kg.input);
        }
    }
    backbone_backward(m.backbone, s.clip, fw.bb, df2, have_df1 ? &df1_extra : nullptr,
                      g.backbone);
    return loss;
}

double sample_loss(const Model& m, Mode mode, const SoftConfig& soft, const VideoSample& s) {
    ForwardState fw;
    return forward_train(m, mode, soft, s, fw);
}

EvalResult tally(const std::vector<int>& labels, const std::vector<int>& predictions) {
    if (labels.size() != predictions.size())
        throw ShapeError("labels and predictions differ in length");
    EvalResult r;
    r.total = labels.size();
    std::array<std::size_t, 4> row_totals{};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int a = labels[i];
        const int b = predictions[i];
        if (a < 0 || a >= 4 || b < 0 || b >= 4) throw ConfigError("class index out of range");
        r.confusion[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += 1;
        row_totals[static_cast<std::size_t>(a)] += 1;
    }
    std::size_t hits = 0;
    for (std::size_t c = 0; c < 4; ++c) {
        hits += r.confusion[c][c];
        r.per_class[c] = row_totals[c] != 0
                             ? static_cast<double>(r.confusion[c][c]) /
                                   static_cast<double>(row_totals[c])
                             : 0.0;
    }
    r.accuracy = r.total != 0 ? static_cast<double>(hits) / static_cast<double>(r.total) : 0.0;
    return r;
}

EvalResult evaluate(const Model& m, const Dataset& ds) {
    std::vector<int> labels, preds;
    labels.reserve(ds.size());
    preds.reserve(ds.size());
    for (const VideoSample& s : ds) {
        const Tensor z = model_logits(m, s.clip);
        int best = 0;
        for (int c = 1; c < 4; ++c)
            if (z.data()[c] > z.data()[best]) best = c;
        labels.push_back(s.label);
        preds.push_back(best);
    }
    return tally(labels, preds);
}

Tensor model_features(const Model& m, const Tensor& clip) {
    Tensor f1;
    const bool need1 = m.use_kpsem && m.kpsem_stage == 1;
    Tensor f2 = backbone_forward(m.backbone, clip, nullptr, need1 ? &f1 : nullptr);
    Tensor spatial = spatial_mean(f2);
    if (!m.use_kpsem) return spatial;
    Tensor temporal = kpsem_forward(need1 ? f1 : f2, m.kpsem, m.kcfg);
    return fuse_features(spatial, temporal);
}

Tensor model_logits(const Model& m, const Tensor& clip) {
    return linear_forward(model_features(m, clip), m.classifier.weight, m.classifier.bias);
}

TrainResult train(const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw ConfigError("training set is empty");
    if (cfg.batch == 0) throw ConfigError("batch size must be at least 1");
    if (cfg.lr < 0.0) throw ConfigError("learning rate must be non-negative");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (cfg.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    const std::size_t frames = train_set.front().clip.extent(1);
    TrainResult result;
    result.model = init_model(cfg, frames);
    Model& m = result.model;

    const bool nets_trainable = cfg.mode == Mode::Soft;
    Refs params = collect_refs(m.backbone, m.use_kpsem ? &m.kpsem : nullptr, m.classifier,
                               nets_trainable);
    SampleGrads acc = zero_sample_grads(m, train_set.front().clip);
    Refs grads = collect_refs(acc.backbone, m.use_kpsem ? &acc.kpsem : nullptr, acc.classifier,
                              nets_trainable);

    std::vector<Tensor> velocity;
    velocity.reserve(params.tensors.size());
    for (Tensor* t : params.tensors) velocity.push_back(Tensor::zeros(t->dims()));

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed + 0x9e3779b97f4a7c15ULL * epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        double epoch_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t take = std::min(cfg.batch, order.size() - done);
            for (Tensor* t : grads.tensors) t->fill(0.0);
            for (std::size_t b = 0; b < take; ++b) {
                const VideoSample& s = train_set[order[done + b]];
                const double loss = sample_loss_and_grads(m, cfg.mode, cfg.soft, s, acc);
                if (!std::isfinite(loss))
                    throw DivergenceError("training loss is not finite at epoch " +
                                          std::to_string(epoch));
                epoch_loss += loss;
            }
            const double scale = 1.0 / static_cast<double>(take);
            for (std::size_t p = 0; p < params.tensors.size(); ++p) {
                if (!params.trainable[p]) continue;
                Tensor& theta = *params.tensors[p];
                const Tensor& gsum = *grads.tensors[p];
                Tensor& vel = velocity[p];
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    const double g =
                        gsum.data()[i] * scale + cfg.weight_decay * theta.data()[i];
                    vel.data()[i] = cfg.momentum * vel.data()[i] + g;
                    theta.data()[i] -= cfg.lr * vel.data()[i];
                }
            }
            done += take;
        }
        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = epoch_loss / static_cast<double>(order.size());
        const EvalResult ev = evaluate(m, test_set);
        em.test_acc = ev.accuracy;
        em.per_class = ev.per_class;
        result.trace.push_back(em);
    }
    return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& trace) {
    std::string out = "epoch,train_loss,test_acc,acc_up,acc_down,acc_left,acc_right\n";
    char buf[176];
    for (const EpochMetrics& em : trace) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", em.epoch,
                      em.train_loss, em.test_acc, em.per_class[0], em.per_class[1],
                      em.per_class[2], em.per_class[3]);
        out += buf;
    }
    return out;
}

}  // namespace kpshift
