#include "dd/student.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dd/io.hpp"

namespace dd {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kStudentKind = 3;
}  // namespace

void TimestepSchedule::validate(std::uint32_t n) const {
    if (steps.empty()) throw DomainError("schedule: empty");
    if (steps.front() != 1) throw DomainError("schedule: first timestep must be 1");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] < 1 || steps[i] > n)
            throw DomainError("schedule: timestep " + std::to_string(steps[i]) +
                              " outside [1, " + std::to_string(n) + "]");
        if (i > 0 && steps[i] <= steps[i - 1])
            throw DomainError("schedule: timesteps must be strictly increasing");
    }
    if (!weights.empty()) {
        if (weights.size() != steps.size())
            throw DomainError("schedule: weight count must match timestep count");
        for (double w : weights)
            if (!(w > 0.0)) throw DomainError("schedule: weights must be positive");
    }
}

double TimestepSchedule::weight_of(std::uint32_t t) const {
    for (std::size_t i = 0; i < steps.size(); ++i)
        if (steps[i] == t) return weights.empty() ? 1.0 : weights[i];
    throw DomainError("schedule: timestep " + std::to_string(t) + " not in schedule");
}

bool TimestepSchedule::contains(std::uint32_t t) const {
    return std::find(steps.begin(), steps.end(), t) != steps.end();
}

void StudentModel::init_common(std::uint32_t n, std::uint32_t vocab, std::uint32_t dim,
                               std::uint32_t num_classes, TimestepSchedule schedule,
                               const StudentConfig& cfg) {
    if (n == 0 || vocab == 0 || dim == 0) throw DomainError("student: bad dimensions");
    schedule.validate(n);
    n_ = n;
    vocab_ = vocab;
    dim_ = dim;
    num_classes_ = num_classes;
    schedule_ = std::move(schedule);
    cfg_ = cfg;
    split_point_ = cfg.split_point;
    if (split_point_ == 0)
        split_point_ = (schedule_.steps.front() + schedule_.steps.back() + 1) / 2;
    if (split_point_ < 1 || split_point_ > n + 1)
        throw DomainError("student: split point outside [1, n+1]");
}

StudentModel StudentModel::fresh(std::uint32_t n, std::uint32_t vocab, std::uint32_t dim,
                                 std::uint32_t num_classes, TimestepSchedule schedule,
                                 const StudentConfig& cfg, std::uint64_t seed) {
    StudentModel m;
    m.init_common(n, vocab, dim, num_classes, std::move(schedule), cfg);
    Rng rng(seed);
    const std::int64_t w = cfg.arch.width;
    const double std0 = cfg.arch.init_std;
    m.class_emb_ = nn::Param("class_emb",
                             nn::Tensor::randn({static_cast<std::int64_t>(num_classes) + 1, w},
                                               rng, std0));
    m.tok_emb_ = nn::Param("tok_emb",
                           nn::Tensor::randn({static_cast<std::int64_t>(vocab), w}, rng, std0));
    m.noise_proj_ = nn::Param("noise_proj",
                              nn::Tensor::randn({static_cast<std::int64_t>(dim), w}, rng, std0));
    m.type_data_ = nn::Param("type_data", nn::Tensor::randn({w}, rng, cfg.new_module_std));
    m.type_noise_ = nn::Param("type_noise", nn::Tensor::randn({w}, rng, cfg.new_module_std));
    m.pos_emb_ = nn::Param("pos_emb",
                           nn::Tensor::randn({static_cast<std::int64_t>(n) + 1, w}, rng, std0));
    m.backbone_.init(cfg.arch, rng);
    m.logits_w_ = nn::Param("logits_w",
                            nn::Tensor::randn({w, static_cast<std::int64_t>(vocab)}, rng, std0));
    m.logits_b_ = nn::Param("logits_b", nn::Tensor::zeros({static_cast<std::int64_t>(vocab)}));
    m.embed_w_ = nn::Param("embed_w",
                           nn::Tensor::randn({w, static_cast<std::int64_t>(dim)}, rng, std0));
    m.embed_b_ = nn::Param("embed_b", nn::Tensor::zeros({static_cast<std::int64_t>(dim)}));
    return m;
}

StudentModel StudentModel::distilled_from(const NeuralTeacher& teacher, std::uint32_t dim,
                                          TimestepSchedule schedule, const StudentConfig& cfg,
                                          std::uint64_t seed) {
    const TeacherNet& net = teacher.net();
    StudentConfig merged = cfg;
    merged.arch = net.cfg;
    StudentModel m = fresh(net.seq_len, net.vocab, dim, net.num_classes, std::move(schedule),
                           merged, seed);
    // Inherit everything that has a counterpart; the extra positional
    // slot keeps its fresh small-variance init.
    m.class_emb_.w = net.class_emb.w;
    m.tok_emb_.w = net.tok_emb.w;
    m.backbone_.copy_from(net.backbone);
    m.logits_w_.w = net.head_w.w;
    m.logits_b_.w = net.head_b.w;
    const std::int64_t width = net.cfg.width;
    for (std::uint32_t slot = 0; slot < net.seq_len; ++slot)
        for (std::int64_t j = 0; j < width; ++j)
            m.pos_emb_.w.v[slot * width + j] = net.pos_emb.w.v[slot * width + j];
    Rng rng(split_seed(seed, 0xD15711));
    for (double& v : m.type_data_.w.v) v = cfg.new_module_std * rng.next_gaussian();
    for (double& v : m.type_noise_.w.v) v = cfg.new_module_std * rng.next_gaussian();
    for (std::int64_t j = 0; j < width; ++j)
        m.pos_emb_.w.v[static_cast<std::size_t>(net.seq_len) * width + j] =
            cfg.new_module_std * rng.next_gaussian();
    return m;
}

StudentModel::ForwardNodes StudentModel::forward_graph(
    nn::Graph& g, const std::vector<const TrajectoryPoint*>& points,
    const std::vector<std::uint32_t>& class_ids, const ParamBind& bind) const {
    const std::uint32_t B = static_cast<std::uint32_t>(points.size());
    const std::uint32_t S = n_ + 1;  // class + n positions

    auto class_node = bind(class_emb_);
    auto tok_node = bind(tok_emb_);
    auto noise_node = bind(noise_proj_);
    auto type_data_node = bind(type_data_);
    auto type_noise_node = bind(type_noise_);
    auto pos_node = bind(pos_emb_);

    std::vector<nn::Graph::NodeId> sample_blocks;
    sample_blocks.reserve(B);
    std::vector<std::int64_t> pos_rows(S);
    std::iota(pos_rows.begin(), pos_rows.end(), 0);

    for (std::uint32_t b = 0; b < B; ++b) {
        const TrajectoryPoint& xt = *points[b];
        if (xt.size() != n_)
            throw DomainError("student: trajectory point length " + std::to_string(xt.size()) +
                              " does not match n = " + std::to_string(n_));
        if (xt.t < 1 || xt.t > n_ + 1) throw DomainError("student: t outside [1, n+1]");
        if (class_ids[b] > num_classes_) throw DomainError("student: class id out of range");
        if (xt.suffix.size() > 0 && xt.suffix.dim() != dim_)
            throw DomainError("student: noise dimension mismatch");

        std::vector<nn::Graph::NodeId> rows;
        rows.push_back(g.select_rows(class_node, {static_cast<std::int64_t>(class_ids[b])}));
        if (xt.prefix.size() > 0) {
            std::vector<std::int64_t> tok_rows;
            tok_rows.reserve(xt.prefix.size());
            for (std::uint32_t id : xt.prefix.ids) {
                if (id < 1 || id > vocab_) throw DomainError("student: token id out of range");
                tok_rows.push_back(static_cast<std::int64_t>(id) - 1);
            }
            rows.push_back(g.add(g.select_rows(tok_node, std::move(tok_rows)), type_data_node));
        }
        if (xt.suffix.size() > 0) {
            nn::Tensor noise({static_cast<std::int64_t>(xt.suffix.size()),
                              static_cast<std::int64_t>(dim_)});
            noise.v = xt.suffix.raw();
            rows.push_back(
                g.add(g.matmul(g.constant(std::move(noise)), noise_node), type_noise_node));
        }
        auto x = g.vstack(rows);
        x = g.add(x, g.select_rows(pos_node, pos_rows));
        sample_blocks.push_back(x);
    }

    auto x = sample_blocks.size() == 1 ? sample_blocks[0] : g.vstack(sample_blocks);
    auto h = backbone_.forward(g, x, batched_causal_mask(S, B), bind);

    // Readout rows: slots 1..n of each sample.
    std::vector<std::int64_t> readout;
    readout.reserve(static_cast<std::size_t>(B) * n_);
    for (std::uint32_t b = 0; b < B; ++b)
        for (std::uint32_t j = 1; j <= n_; ++j)
            readout.push_back(static_cast<std::int64_t>(b) * S + j);
    auto hr = g.select_rows(h, std::move(readout));

    ForwardNodes out;
    out.logits = g.add(g.matmul(hr, bind(logits_w_)), bind(logits_b_));
    out.embeds = g.add(g.matmul(hr, bind(embed_w_)), bind(embed_b_));
    return out;
}

StudentOutput StudentModel::f_theta(const TrajectoryPoint& xt,
                                    std::optional<std::uint32_t> condition) const {
    nn::Graph g;
    ForwardNodes nodes = forward_graph(g, {&xt}, {condition.value_or(0)}, bind_frozen(g));
    return {g.value(nodes.logits), g.value(nodes.embeds)};
}

std::vector<double> StudentModel::ar_next_logits(
    const TrajectoryPoint& xt, std::optional<std::uint32_t> condition) const {
    nn::Graph g;
    ParamBind bind = bind_frozen(g);
    const std::uint32_t S = n_ + 1;

    // Reuse the shared input assembly, then read the backbone at slot
    // t-1 instead of the per-position slots.
    std::vector<nn::Graph::NodeId> rows;
    rows.push_back(
        g.select_rows(bind(class_emb_), {static_cast<std::int64_t>(condition.value_or(0))}));
    if (xt.prefix.size() > 0) {
        std::vector<std::int64_t> tok_rows;
        for (std::uint32_t id : xt.prefix.ids)
            tok_rows.push_back(static_cast<std::int64_t>(id) - 1);
        rows.push_back(g.add(g.select_rows(bind(tok_emb_), std::move(tok_rows)), bind(type_data_)));
    }
    if (xt.suffix.size() > 0) {
        nn::Tensor noise({static_cast<std::int64_t>(xt.suffix.size()),
                          static_cast<std::int64_t>(dim_)});
        noise.v = xt.suffix.raw();
        rows.push_back(
            g.add(g.matmul(g.constant(std::move(noise)), bind(noise_proj_)), bind(type_noise_)));
    }
    auto x = g.vstack(rows);
    std::vector<std::int64_t> pos_rows(S);
    std::iota(pos_rows.begin(), pos_rows.end(), 0);
    x = g.add(x, g.select_rows(bind(pos_emb_), pos_rows));
    auto h = backbone_.forward(g, x, causal_mask(S), bind);
    auto hr = g.slice_rows(h, xt.t - 1, xt.t);
    auto logits = g.add(g.matmul(hr, bind(logits_w_)), bind(logits_b_));
    return g.value(logits).v;
}

TokenSeq StudentModel::predict_final(const TrajectoryPoint& xt, const Codebook& cb,
                                     std::optional<std::uint32_t> condition, LogitDecode decode,
                                     Rng* rng) const {
    TokenSeq out = xt.prefix;
    out.condition = condition;
    if (xt.t == n_ + 1) return out;  // nothing left to predict

    StudentOutput y = f_theta(xt, condition);
    const bool use_logits = xt.t < split_point_;
    for (std::uint32_t j = xt.t; j <= n_; ++j) {
        const std::size_t row = j - 1;
        if (use_logits) {
            const double* lr = y.logits.v.data() + row * vocab_;
            if (decode == LogitDecode::sample) {
                if (!rng) throw DomainError("predict_final: sampling decode needs an rng");
                double maxl = *std::max_element(lr, lr + vocab_);
                std::vector<double> p(vocab_);
                double denom = 0.0;
                for (std::uint32_t k = 0; k < vocab_; ++k) {
                    p[k] = std::exp(lr[k] - maxl);
                    denom += p[k];
                }
                for (double& v : p) v /= denom;
                out.ids.push_back(rng->next_categorical(p));
            } else {
                std::uint32_t best = 0;
                for (std::uint32_t k = 1; k < vocab_; ++k)
                    if (lr[k] > lr[best]) best = k;
                out.ids.push_back(best + 1);
            }
        } else {
            std::span<const double> e{y.embeds.v.data() + row * dim_, dim_};
            out.ids.push_back(nearest_token(e, cb));
        }
    }
    return out;
}

DistillLossParts StudentModel::batch_loss(const std::vector<BatchItem>& items,
                                          const Codebook& cb, bool accumulate_grads) {
    if (items.empty()) throw DomainError("batch_loss: empty batch");
    const std::uint32_t B = static_cast<std::uint32_t>(items.size());

    std::vector<TrajectoryPoint> points;
    points.reserve(B);
    std::vector<const TrajectoryPoint*> point_ptrs;
    std::vector<std::uint32_t> class_ids;
    for (const BatchItem& item : items) {
        if (!schedule_.contains(item.t))
            throw DomainError("batch_loss: t=" + std::to_string(item.t) + " not in schedule");
        points.push_back(build_xt(*item.pair, item.t));
        class_ids.push_back(item.pair->condition.value_or(0));
    }
    for (const TrajectoryPoint& p : points) point_ptrs.push_back(&p);

    nn::Graph g;
    ParamBind bind = accumulate_grads ? bind_trainable(g) : bind_frozen(g);
    ForwardNodes nodes = forward_graph(g, point_ptrs, class_ids, bind);

    // Supervision targets for all B*n readout rows.
    nn::Tensor target_embeds({static_cast<std::int64_t>(B) * n_,
                              static_cast<std::int64_t>(dim_)});
    std::vector<std::int64_t> targets(static_cast<std::size_t>(B) * n_, 0);
    for (std::uint32_t b = 0; b < B; ++b) {
        const TokenSeq& data = items[b].pair->data;
        for (std::uint32_t j = 0; j < n_; ++j) {
            std::size_t row = static_cast<std::size_t>(b) * n_ + j;
            targets[row] = static_cast<std::int64_t>(data.ids[j]) - 1;
            auto entry = cb.entry(data.ids[j]);
            for (std::uint32_t k = 0; k < dim_; ++k)
                target_embeds.v[row * dim_ + k] = static_cast<double>(entry[k]);
        }
    }
    auto target_node = g.constant(std::move(target_embeds));

    // Group rows by schedule position so each group gets its weight; rows
    // within a group have equal supervised counts, so the row mean equals
    // the per-sample mean.
    nn::Graph::NodeId total = -1;
    DistillLossParts parts;
    for (std::uint32_t si = 0; si < schedule_.count(); ++si) {
        std::uint32_t t = schedule_.steps[si];
        std::vector<std::uint8_t> active(static_cast<std::size_t>(B) * n_, 0);
        std::uint32_t group = 0;
        for (std::uint32_t b = 0; b < B; ++b) {
            if (items[b].t != t) continue;
            ++group;
            for (std::uint32_t j = t; j <= n_; ++j)
                active[static_cast<std::size_t>(b) * n_ + (j - 1)] = 1;
        }
        if (group == 0) continue;
        double lambda_t = schedule_.weight_of(t);
        double frac = static_cast<double>(group) / static_cast<double>(B);
        auto ce = g.softmax_cross_entropy(nodes.logits, targets, active);
        auto mse = g.mean_squared_error(nodes.embeds, target_node, active);
        auto combined = g.add_weighted(mse, ce, cfg_.loss_w_embed, cfg_.loss_w_logits);
        parts.embed += frac * lambda_t * g.value(mse).v[0];
        parts.logits += frac * lambda_t * g.value(ce).v[0];
        if (total < 0)
            total = g.scale(combined, frac * lambda_t);
        else
            total = g.add_weighted(total, combined, 1.0, frac * lambda_t);
    }
    if (total < 0) {
        // Every sample sat at t = n+1; loss is zero by construction.
        return parts;
    }
    parts.total = g.value(total).v[0];
    if (!std::isfinite(parts.total)) throw NumericError("distill loss: non-finite");
    if (accumulate_grads) g.backward(total);
    return parts;
}

DistillLossParts StudentModel::distill_loss(const PairRecord& pair, const Codebook& cb,
                                            std::uint32_t t) {
    if (t == n_ + 1) return {};  // no supervised positions
    return batch_loss({BatchItem{&pair, t}}, cb, /*accumulate_grads=*/true);
}

std::vector<nn::Param*> StudentModel::params() {
    std::vector<nn::Param*> out{&class_emb_, &tok_emb_,   &noise_proj_, &type_data_,
                                &type_noise_, &pos_emb_};
    for (nn::Param* p : backbone_.params()) out.push_back(p);
    out.push_back(&logits_w_);
    out.push_back(&logits_b_);
    out.push_back(&embed_w_);
    out.push_back(&embed_b_);
    return out;
}

void StudentModel::save(std::ostream& os) const {
    ByteWriter w(os);
    w.magic("DDTC");
    w.u32(kCheckpointVersion);
    w.u32(kStudentKind);
    w.u32(n_);
    w.u32(vocab_);
    w.u32(dim_);
    w.u32(num_classes_);
    w.u32(cfg_.arch.width);
    w.u32(cfg_.arch.layers);
    w.u32(cfg_.arch.mlp_mult);
    w.u32(split_point_);
    w.f64(cfg_.loss_w_embed);
    w.f64(cfg_.loss_w_logits);
    w.u32(schedule_.count());
    for (std::uint32_t t : schedule_.steps) w.u32(t);
    w.u32(static_cast<std::uint32_t>(schedule_.weights.size()));
    for (double wt : schedule_.weights) w.f64(wt);
    auto mut = const_cast<StudentModel*>(this)->params();
    nn::write_params(os, {mut.begin(), mut.end()});
}

void StudentModel::save_file(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    save(os);
}

StudentModel StudentModel::load(std::istream& is) {
    ByteReader r(is);
    r.expect_magic("DDTC", "checkpoint");
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    std::uint32_t kind = r.u32();
    if (kind != kStudentKind)
        throw IoError("checkpoint: not a student model (kind tag " + std::to_string(kind) + ")");
    std::uint32_t n = r.u32();
    std::uint32_t vocab = r.u32();
    std::uint32_t dim = r.u32();
    std::uint32_t classes = r.u32();
    StudentConfig cfg;
    cfg.arch.width = r.u32();
    cfg.arch.layers = r.u32();
    cfg.arch.mlp_mult = r.u32();
    cfg.split_point = r.u32();
    cfg.loss_w_embed = r.f64();
    cfg.loss_w_logits = r.f64();
    TimestepSchedule schedule;
    std::uint32_t count = r.u32();
    schedule.steps.resize(count);
    for (std::uint32_t& t : schedule.steps) t = r.u32();
    std::uint32_t wcount = r.u32();
    schedule.weights.resize(wcount);
    for (double& wt : schedule.weights) wt = r.f64();
    StudentModel m = fresh(n, vocab, dim, classes, std::move(schedule), cfg, /*seed=*/0);
    nn::read_params(is, m.params());
    return m;
}

StudentModel StudentModel::load_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    return load(is);
}

StudentModel train_student(const PairStore& store, const Codebook& cb, const Teacher& teacher,
                           TimestepSchedule schedule, const StudentConfig& model_cfg,
                           const StudentTrainConfig& cfg) {
    if (store.size() == 0) throw DomainError("train_student: empty pair store");
    if (store.teacher_fingerprint() != teacher.fingerprint())
        throw FingerprintError(
            "train_student: pair store fingerprint " + hex64(store.teacher_fingerprint()) +
            " does not match teacher " + hex64(teacher.fingerprint()));
    schedule.validate(store.seq_len());

    StudentModel model;
    if (const auto* neural = dynamic_cast<const NeuralTeacher*>(&teacher)) {
        model = StudentModel::distilled_from(*neural, store.dim(), std::move(schedule),
                                             model_cfg, split_seed(cfg.seed, 0));
    } else {
        std::uint32_t classes = 1;
        for (std::size_t i = 0; i < store.size(); ++i)
            if (store.record(i).condition)
                classes = std::max(classes, *store.record(i).condition + 1);
        model = StudentModel::fresh(store.seq_len(), store.vocab(), store.dim(), classes,
                                    std::move(schedule), model_cfg, split_seed(cfg.seed, 0));
    }

    auto params = model.params();
    nn::AdamwConfig opt_cfg;
    opt_cfg.lr = cfg.lr_scaled_by_batch ? cfg.lr * cfg.batch / 256.0 : cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    nn::AdamW opt(params, opt_cfg);
    nn::Ema ema(params, cfg.ema_decay);

    Rng rng(split_seed(cfg.seed, 1));
    const std::uint32_t batch = std::max<std::uint32_t>(1, cfg.batch);
    const std::size_t steps_per_epoch = (store.size() + batch - 1) / batch;
    const auto& sched = model.schedule();

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<StudentModel::BatchItem> items(batch);
            for (auto& item : items) {
                item.pair = &store.record(rng.next_index(store.size()));
                item.t = sched.steps[rng.next_index(sched.count())];
            }
            opt.zero_grad();
            DistillLossParts parts = model.batch_loss(items, cb, /*accumulate_grads=*/true);
            opt.step();
            ema.update();
            epoch_loss += parts.total;
        }
        epoch_loss /= static_cast<double>(steps_per_epoch);
        if (cfg.log)
            (*cfg.log) << "event=epoch stage=distill idx=" << epoch << " loss=" << epoch_loss
                       << "\n";
    }
    ema.swap();  // evaluate with averaged weights
    return model;
}

}  // namespace dd
