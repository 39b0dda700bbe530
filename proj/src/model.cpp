#include "equiplan/model.hpp"

#include <cmath>
#include <string>

namespace equiplan {

void ModelConfig::validate() const {
    if (channels < 2 || hidden < 1 || relations < 1 || modes < 1 || t_p < 2 || t_f < 1) {
        throw validation_error(
            "model config requires channels >= 2, hidden >= 1, relations >= 1, modes >= 1, "
            "t_p >= 2, t_f >= 1");
    }
}

namespace {

Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    Mlp m;
    m.w1 = Tensor::init_uniform(hidden, in, in, rng);
    m.b1 = Tensor::init_uniform(hidden, 1, in, rng);
    m.w2 = Tensor::init_uniform(out, hidden, hidden, rng);
    m.b2 = Tensor::init_uniform(out, 1, hidden, rng);
    return m;
}

}  // namespace

ModelParams ModelParams::create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(Rng::mix(seed, 0xe9));
    ModelParams p;
    p.cfg = cfg;
    const std::size_t c = cfg.channels, d = cfg.hidden;
    p.init_g = Tensor::init_uniform(c, cfg.t_p, cfg.t_p, rng);
    p.init_h = make_mlp(2 * cfg.t_p - 3, d, d, rng);
    p.rel = make_mlp(2 * d + 1, d, cfg.relations, rng);
    p.blocks.resize(cfg.blocks);
    for (auto& blk : p.blocks) {
        blk.ra = Tensor::init_uniform(c, c, c, rng);
        blk.att = make_mlp(d, d, c, rng);
        blk.edge.reserve(cfg.relations);
        for (std::size_t q = 0; q < cfg.relations; ++q) {
            blk.edge.push_back(make_mlp(2 * d + c, d, c, rng));
        }
        blk.nl_q = Tensor::init_uniform(c, c, c, rng);
        blk.nl_k = Tensor::init_uniform(c, c, c, rng);
        blk.msg = make_mlp(2 * d + c, d, d, rng);
        blk.upd = make_mlp(2 * d, d, d, rng);
    }
    p.decoders.reserve(cfg.modes);
    for (std::size_t k = 0; k < cfg.modes; ++k) {
        p.decoders.push_back(Tensor::init_uniform(cfg.t_f + 1, c, c, rng));
    }
    return p;
}

std::size_t ModelParams::param_count() const {
    std::size_t n = 0;
    for_each_param(*this, [&](const std::string&, const Tensor& t) { n += t.numel(); });
    return n;
}

Tensor motion_profile(const std::vector<Vec2>& past) {
    const std::size_t t_p = past.size();
    if (t_p < 2) throw contract_error("motion profile needs >= 2 past positions");
    std::vector<Vec2> delta(t_p - 1);
    for (std::size_t k = 0; k + 1 < t_p; ++k) delta[k] = past[k + 1] - past[k];

    Tensor out(2 * t_p - 3, 1);
    for (std::size_t k = 0; k < delta.size(); ++k) out.at(k, 0) = norm(delta[k]);
    // signed angle between consecutive step vectors; zero when nearly stopped
    constexpr double kMinSpeed = 1e-6;
    for (std::size_t k = 0; k + 1 < delta.size(); ++k) {
        const Vec2 a = delta[k], b = delta[k + 1];
        const double angle = (norm(a) < kMinSpeed || norm(b) < kMinSpeed)
                                 ? 0.0
                                 : std::atan2(cross(a, b), dot(a, b));
        out.at(t_p - 1 + k, 0) = angle;
    }
    return out;
}

namespace graph {

namespace {

Model::MlpVars bind_mlp(Tape& t, const Mlp& m, std::vector<Var>& order) {
    Model::MlpVars v{t.leaf(m.w1), t.leaf(m.b1), t.leaf(m.w2), t.leaf(m.b2)};
    order.insert(order.end(), {v.w1, v.b1, v.w2, v.b2});
    return v;
}

// Mean of the per-vehicle feature matrices (channels x 2).
Var vehicle_mean(Tape& t, const std::vector<Var>& g) {
    Var acc = g[0];
    for (std::size_t i = 1; i < g.size(); ++i) acc = t.add(acc, g[i]);
    return t.scale(acc, 1.0 / static_cast<double>(g.size()));
}

}  // namespace

Model bind(Tape& tape, const ModelParams& params) {
    params.cfg.validate();
    Model m;
    m.tape = &tape;
    m.cfg = params.cfg;
    auto& order = m.param_order;
    m.init_g = tape.leaf(params.init_g);
    order.push_back(m.init_g);
    m.init_h = bind_mlp(tape, params.init_h, order);
    m.rel = bind_mlp(tape, params.rel, order);
    m.blocks.reserve(params.blocks.size());
    for (const auto& blk : params.blocks) {
        Model::BlockVars bv;
        bv.ra = tape.leaf(blk.ra);
        order.push_back(bv.ra);
        bv.att = bind_mlp(tape, blk.att, order);
        for (const auto& e : blk.edge) bv.edge.push_back(bind_mlp(tape, e, order));
        bv.nl_q = tape.leaf(blk.nl_q);
        bv.nl_k = tape.leaf(blk.nl_k);
        order.insert(order.end(), {bv.nl_q, bv.nl_k});
        bv.msg = bind_mlp(tape, blk.msg, order);
        bv.upd = bind_mlp(tape, blk.upd, order);
        m.blocks.push_back(std::move(bv));
    }
    for (const auto& d : params.decoders) {
        m.decoders.push_back(tape.leaf(d));
        order.push_back(m.decoders.back());
    }
    return m;
}

Var apply_mlp(Tape& t, const Model::MlpVars& m, Var x) {
    return t.add(t.matmul(m.w2, t.tanh(t.add(t.matmul(m.w1, x), m.b1))), m.b2);
}

std::vector<Var> init_equivariant(Model& m, const Scene& scene, bool centered) {
    Tape& t = *m.tape;
    const std::size_t tp = scene.t_past();
    if (tp != m.cfg.t_p) {
        throw contract_error("scene past length " + std::to_string(tp) +
                             " does not match model t_p " + std::to_string(m.cfg.t_p));
    }

    Vec2 mean{0, 0};
    for (const auto& traj : scene.past)
        for (const auto& p : traj) mean = mean + p;
    mean = (1.0 / static_cast<double>(scene.num_vehicles() * tp)) * mean;

    Var mean_row = t.constant(Tensor::row2(mean.x, mean.y));
    Var neg_mean_row = t.constant(Tensor::row2(-mean.x, -mean.y));

    std::vector<Var> g;
    g.reserve(scene.num_vehicles());
    for (const auto& traj : scene.past) {
        Tensor x(tp, 2);
        for (std::size_t k = 0; k < tp; ++k) {
            x.at(k, 0) = traj[k].x;
            x.at(k, 1) = traj[k].y;
        }
        Var xv = t.constant(std::move(x));
        if (centered) {
            Var centered_x = t.add_rowvec(xv, neg_mean_row);
            g.push_back(t.add_rowvec(t.matmul(m.init_g, centered_x), mean_row));
        } else {
            g.push_back(t.matmul(m.init_g, xv));
        }
    }
    return g;
}

std::vector<Var> init_invariant(Model& m, const Scene& scene) {
    Tape& t = *m.tape;
    std::vector<Var> h;
    h.reserve(scene.num_vehicles());
    for (const auto& traj : scene.past) {
        h.push_back(apply_mlp(t, m.init_h, t.constant(motion_profile(traj))));
    }
    return h;
}

std::vector<Var> infer_relations(Model& m, const std::vector<Var>& h,
                                 const std::vector<Var>& g) {
    Tape& t = *m.tape;
    const std::size_t n = h.size();
    std::vector<Var> rel(n * n);
    std::vector<Var> rho(n);
    for (std::size_t i = 0; i < n; ++i) rho[i] = t.mean_rows(g[i]);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            Var dist = t.rowwise_l2norm(t.sub(rho[i], rho[j]));
            Var in = t.concat_rows({h[i], h[j], dist});
            rel[i * n + j] = t.softmax(apply_mlp(t, m.rel, in));
        }
    }
    return rel;
}

void route_attraction(Model& m, std::vector<Var>& g, Var route, std::size_t block) {
    Tape& t = *m.tape;
    const Tensor& l = t.val(route);
    const Tensor& g0 = t.val(g[0]);
    if (l.rows != g0.rows || l.cols != 2) {
        throw contract_error("route embedding " + l.shape_str() +
                             " does not match ego feature " + g0.shape_str());
    }
    const auto& blk = m.blocks.at(block);
    g[0] = t.add(g[0], t.matmul(blk.ra, t.sub(route, g[0])));
}

void inner_aggregation(Model& m, std::vector<Var>& g, const std::vector<Var>& h,
                       std::size_t block) {
    Tape& t = *m.tape;
    const auto& blk = m.blocks.at(block);
    Var mean = vehicle_mean(t, g);
    std::vector<Var> next(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        Var gate = t.sigmoid(apply_mlp(t, blk.att, h[i]));
        next[i] = t.add(t.scale_rows(t.sub(g[i], mean), gate), mean);
    }
    g = std::move(next);
}

void neighbor_aggregation(Model& m, std::vector<Var>& g, const std::vector<Var>& h,
                          const std::vector<Var>& relations, std::size_t block) {
    Tape& t = *m.tape;
    const std::size_t n = g.size();
    if (n < 2) return;  // no neighbors
    const auto& blk = m.blocks.at(block);
    std::vector<Var> next(n);
    for (std::size_t i = 0; i < n; ++i) {
        Var acc{};
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            Var diff = t.sub(g[i], g[j]);
            Var in = t.concat_rows({h[i], h[j], t.rowwise_l2norm(diff)});
            const Var& cij = relations[i * n + j];
            Var edge{};
            for (std::size_t q = 0; q < m.cfg.relations; ++q) {
                Var weighted = t.scale_by(apply_mlp(t, blk.edge[q], in), t.pick(cij, q));
                edge = edge.valid() ? t.add(edge, weighted) : weighted;
            }
            Var term = t.scale_rows(diff, edge);
            acc = acc.valid() ? t.add(acc, term) : term;
        }
        next[i] = t.add(g[i], t.scale(acc, 1.0 / static_cast<double>(n - 1)));
    }
    g = std::move(next);
}

void equivariant_nonlinearity(Model& m, std::vector<Var>& g, std::size_t block) {
    Tape& t = *m.tape;
    const auto& blk = m.blocks.at(block);
    const std::size_t c = m.cfg.channels;
    Var mean = vehicle_mean(t, g);
    std::vector<Var> next(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        Var centered = t.sub(g[i], mean);
        Var q = t.matmul(blk.nl_q, centered);
        Var k = t.matmul(blk.nl_k, centered);
        Var qk = t.rowwise_dot(q, k);
        Var kk = t.rowwise_dot(k, k);

        // branch selection is fixed at forward time; zero keys pass through
        Tensor reflect(c, 1), keep(c, 1), keep_den(c, 1);
        const Tensor& qkv = t.val(qk);
        const Tensor& kkv = t.val(kk);
        for (std::size_t r = 0; r < c; ++r) {
            const bool mirrored = qkv.at(r, 0) < 0.0 && kkv.at(r, 0) > 1e-24;
            reflect.at(r, 0) = mirrored ? 1.0 : 0.0;
            keep.at(r, 0) = mirrored ? 0.0 : 1.0;
            keep_den.at(r, 0) = mirrored ? 0.0 : 1.0;
        }
        Var reflect_mask = t.constant(std::move(reflect));
        Var keep_mask = t.constant(std::move(keep));
        // denominator forced to 1 on kept rows so the unused branch stays finite
        Var safe_kk = t.add(t.mul(kk, reflect_mask), t.constant(std::move(keep_den)));
        Var ratio = t.scale(t.div(qk, safe_kk), 2.0);
        Var mirrored_rows = t.sub(q, t.scale_rows(k, ratio));
        Var combined =
            t.add(t.scale_rows(q, keep_mask), t.scale_rows(mirrored_rows, reflect_mask));
        next[i] = t.add(combined, mean);
    }
    g = std::move(next);
}

void invariant_update(Model& m, const std::vector<Var>& g, std::vector<Var>& h,
                      std::size_t block) {
    Tape& t = *m.tape;
    const auto& blk = m.blocks.at(block);
    const std::size_t n = h.size();
    std::vector<Var> next(n);
    for (std::size_t i = 0; i < n; ++i) {
        Var pooled{};
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            Var in = t.concat_rows({h[i], h[j], t.rowwise_l2norm(t.sub(g[i], g[j]))});
            Var msg = apply_mlp(t, blk.msg, in);
            pooled = pooled.valid() ? t.add(pooled, msg) : msg;
        }
        if (!pooled.valid()) pooled = t.constant(Tensor(m.cfg.hidden, 1));
        next[i] = apply_mlp(t, blk.upd, t.concat_rows({h[i], pooled}));
    }
    h = std::move(next);
}

Features forward(Model& m, const Scene& scene, const ForwardOptions& options) {
    Tape& t = *m.tape;
    Features f;
    f.g = init_equivariant(m, scene, options.equivariant_init);
    f.h = init_invariant(m, scene);
    std::vector<Var> relations = infer_relations(m, f.h, f.g);

    Var route{};
    if (options.route_attraction && !m.blocks.empty()) {
        route = t.constant(resample_route(scene.route, m.cfg.channels).points);
    }
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        if (options.route_attraction) route_attraction(m, f.g, route, l);
        inner_aggregation(m, f.g, f.h, l);
        neighbor_aggregation(m, f.g, f.h, relations, l);
        equivariant_nonlinearity(m, f.g, l);
        invariant_update(m, f.g, f.h, l);
    }
    return f;
}

}  // namespace graph

namespace {

// Shared plumbing for the value-level wrappers: a scratch tape with states
// loaded as constants.
struct Scratch {
    Tape tape;
    graph::Model model;

    explicit Scratch(const ModelParams& params) : model(graph::bind(tape, params)) {}

    std::vector<Var> load(const std::vector<Tensor>& ts) {
        std::vector<Var> vs;
        vs.reserve(ts.size());
        for (const auto& x : ts) vs.push_back(tape.constant(x));
        return vs;
    }
    std::vector<Tensor> dump(const std::vector<Var>& vs) {
        std::vector<Tensor> ts;
        ts.reserve(vs.size());
        for (Var v : vs) ts.push_back(tape.val(v));
        return ts;
    }
};

}  // namespace

EquivariantState init_equivariant(const Scene& scene, const ModelParams& params, bool centered) {
    Scratch s(params);
    return {s.dump(graph::init_equivariant(s.model, scene, centered))};
}

InvariantState init_invariant(const Scene& scene, const ModelParams& params) {
    Scratch s(params);
    return {s.dump(graph::init_invariant(s.model, scene))};
}

RelationTensor infer_relations(const InvariantState& h, const EquivariantState& g,
                               const ModelParams& params) {
    Scratch s(params);
    const auto rel = graph::infer_relations(s.model, s.load(h.h), s.load(g.g));
    RelationTensor out;
    out.m = h.h.size();
    out.c.resize(out.m * out.m);
    for (std::size_t i = 0; i < out.m; ++i) {
        for (std::size_t j = 0; j < out.m; ++j) {
            if (i != j) out.c[i * out.m + j] = s.tape.val(rel[i * out.m + j]);
        }
    }
    return out;
}

EquivariantState route_attraction(const EquivariantState& g, const RouteEmbedding& route,
                                  std::size_t block, const ModelParams& params) {
    Scratch s(params);
    auto gv = s.load(g.g);
    graph::route_attraction(s.model, gv, s.tape.constant(route.points), block);
    return {s.dump(gv)};
}

EquivariantState inner_aggregation(const EquivariantState& g, const InvariantState& h,
                                   std::size_t block, const ModelParams& params) {
    Scratch s(params);
    auto gv = s.load(g.g);
    graph::inner_aggregation(s.model, gv, s.load(h.h), block);
    return {s.dump(gv)};
}

EquivariantState neighbor_aggregation(const EquivariantState& g, const InvariantState& h,
                                      const RelationTensor& relations, std::size_t block,
                                      const ModelParams& params) {
    Scratch s(params);
    auto gv = s.load(g.g);
    std::vector<Var> rel(relations.c.size());
    for (std::size_t i = 0; i < relations.c.size(); ++i) {
        if (relations.c[i].numel() > 0) rel[i] = s.tape.constant(relations.c[i]);
    }
    graph::neighbor_aggregation(s.model, gv, s.load(h.h), rel, block);
    return {s.dump(gv)};
}

EquivariantState equivariant_nonlinearity(const EquivariantState& g, std::size_t block,
                                          const ModelParams& params) {
    Scratch s(params);
    auto gv = s.load(g.g);
    graph::equivariant_nonlinearity(s.model, gv, block);
    return {s.dump(gv)};
}

InvariantState invariant_update(const EquivariantState& g, const InvariantState& h,
                                std::size_t block, const ModelParams& params) {
    Scratch s(params);
    auto hv = s.load(h.h);
    graph::invariant_update(s.model, s.load(g.g), hv, block);
    return {s.dump(hv)};
}

std::pair<EquivariantState, InvariantState> forward(const Scene& scene,
                                                    const ModelParams& params,
                                                    const ForwardOptions& options) {
    Scratch s(params);
    auto f = graph::forward(s.model, scene, options);
    return {EquivariantState{s.dump(f.g)}, InvariantState{s.dump(f.h)}};
}

}  // namespace equiplan
