#include "dualres/training.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "dualres/error.hpp"
#include "dualres/model_graph.hpp"

namespace dualres {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void TrainPlan::validate(const ParamSet& p) const {
  if (!(lr_start >= lr_end) || !(lr_end > 0))
    throw ConfigError("need lr_start >= lr_end > 0 in stage " + stage);
  if (steps < 1) throw ConfigError("step budget must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  for (const auto& name : trainable)
    if (!p.has(name))
      throw DomainError("trainable mask names unknown tensor " + name);
}

std::string TrainPlan::describe() const {
  std::ostringstream os;
  os << "stage=" << stage << " steps=" << steps << " lr=" << lr_start << ".."
     << lr_end << " batch=" << batch_size << " trainable=" << trainable.size()
     << " seed=" << seed;
  return os.str();
}

std::set<std::string> names_all(const ParamSet& p) {
  std::set<std::string> out;
  for (const auto& [name, _] : p.t) out.insert(name);
  return out;
}

std::set<std::string> names_with_prefix(
    const ParamSet& p, const std::vector<std::string>& prefixes) {
  std::set<std::string> out;
  for (const auto& [name, _] : p.t)
    for (const auto& pre : prefixes)
      if (name.rfind(pre, 0) == 0) {
        out.insert(name);
        break;
      }
  return out;
}

std::set<std::string> prealign_trainable(const ParamSet& p) {
  return names_with_prefix(p, {"speech_emb", "group_proj.", "ungroup.", "srh."});
}

double cosine_lr(int step, const TrainPlan& plan) {
  if (step < 0 || step > plan.steps)
    throw DomainError("schedule step " + std::to_string(step) +
                      " outside [0," + std::to_string(plan.steps) + "]");
  const double t = static_cast<double>(step) / plan.steps;
  return plan.lr_end +
         0.5 * (plan.lr_start - plan.lr_end) * (1.0 + std::cos(kPi * t));
}

bool decays(const std::string& name) {
  auto ends_with = [&](const char* suf) {
    size_t n = std::string(suf).size();
    return name.size() >= n && name.compare(name.size() - n, n, suf) == 0;
  };
  return ends_with(".w") || ends_with(".wq") || ends_with(".wk") ||
         ends_with(".wv") || ends_with(".wo") || ends_with(".w1") ||
         ends_with(".w2");
}

void AdamW::step(ParamSet& p, const GradMap& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(plan_.beta1, t_);
  const double bc2 = 1.0 - std::pow(plan_.beta2, t_);
  for (auto& [name, w] : p.t) {
    if (!plan_.trainable.count(name)) continue;
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Mat& g = git->second;
    if (!g.same_shape(w))
      throw ShapeError("gradient shape mismatch for " + name);
    Mat& m = m_.try_emplace(name, Mat::zeros(w.rows, w.cols)).first->second;
    Mat& v = v_.try_emplace(name, Mat::zeros(w.rows, w.cols)).first->second;
    const double wd = decays(name) ? plan_.weight_decay : 0.0;
    for (size_t i = 0; i < w.a.size(); ++i) {
      m.a[i] = plan_.beta1 * m.a[i] + (1.0 - plan_.beta1) * g.a[i];
      v.a[i] = plan_.beta2 * v.a[i] + (1.0 - plan_.beta2) * g.a[i] * g.a[i];
      const double mhat = m.a[i] / bc1;
      const double vhat = v.a[i] / bc2;
      w.a[i] -= lr * (mhat / (std::sqrt(vhat) + plan_.adam_eps) + wd * w.a[i]);
    }
  }
}

ParamSet merge(const ParamSet& m0, const ParamSet& m1, const MergeSpec& spec) {
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0))
    throw DomainError("merge alpha " + std::to_string(spec.alpha) +
                      " outside [0,1]");
  ParamSet out;
  for (const auto& [name, t1] : m1.t) {
    bool excluded = false;
    for (const auto& pre : spec.exclude_prefixes)
      if (name.rfind(pre, 0) == 0) {
        excluded = true;
        break;
      }
    if (excluded) {
      out.t.emplace(name, t1);
      continue;
    }
    auto it0 = m0.t.find(name);
    if (it0 == m0.t.end())
      throw ShapeError("tensor " + name + " missing from the base model");
    const Mat& t0 = it0->second;
    if (!t0.same_shape(t1))
      throw ShapeError("tensor " + name + " has shape " + shape_str(t0) +
                       " vs " + shape_str(t1));
    if (!t0.all_finite() || !t1.all_finite())
      throw DomainError("tensor " + name + " has non-finite entries");
    Mat r(t1.rows, t1.cols);
    for (size_t i = 0; i < r.a.size(); ++i)
      r.a[i] = spec.alpha * t1.a[i] + (1.0 - spec.alpha) * t0.a[i];
    out.t.emplace(name, std::move(r));
  }
  for (const auto& [name, _] : m0.t)
    if (!out.t.count(name))
      throw ShapeError("tensor " + name + " missing from the trained model");
  return out;
}

StageResult train_stage(ParamSet& p, const std::vector<SeqItem>& data,
                        const TrainPlan& plan, const ModelConfig& cfg,
                        std::ostream* log, ModelStats* stats) {
  plan.validate(p);
  if (data.empty()) throw DomainError("no training sequences");
  AdamW opt(plan);
  std::mt19937_64 rng(plan.seed);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  StageResult res;
  for (int step = 0; step < plan.steps; ++step) {
    std::vector<SeqItem> batch;
    batch.reserve(plan.batch_size);
    for (int b = 0; b < plan.batch_size; ++b) batch.push_back(data[pick(rng)]);
    GradMap grads;
    LossBreakdown bd = loss_joint(batch, p, cfg, &grads, stats);
    const double lr = cosine_lr(step, plan);
    opt.step(p, grads, lr);
    if (step == 0) res.first_loss = bd.total;
    res.final_loss = bd.total;
    res.losses.push_back(bd.total);
    if (log)
      (*log) << "stage=" << plan.stage << " step=" << step << " lr=" << lr
             << " loss=" << bd.total << " srh=" << bd.srh
             << " text=" << bd.text << "\n";
  }
  return res;
}

double dpo_pair_loss(double logpi_c, double logpi_r, double logref_c,
                     double logref_r, double beta) {
  const double z = beta * ((logpi_c - logpi_r) - (logref_c - logref_r));
  // -log(sigmoid(z)) = softplus(-z)
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

namespace {

struct PairGraph {
  int loss_node = -1;
  double logpi_c = 0;
  double logpi_r = 0;
};

// Policy log-likelihood node for one sequence: -(srh + text) sums.
int loglik_node(detail::GraphCtx& g, const SeqItem& item, double* value) {
  detail::ItemLossNodes n = detail::build_item_loss(g, item, nullptr);
  std::vector<int> parts;
  if (n.srh >= 0) parts.push_back(n.srh);
  if (n.text >= 0) parts.push_back(n.text);
  int total = parts.size() == 1 ? parts[0] : g.tape.sum_scalars(parts);
  *value = -(n.srh_val + n.text_val);
  return g.tape.scale(total, -1.0);
}

DpoBatchResult dpo_run(ParamSet& policy, const ParamSet& reference,
                       const std::vector<PreferencePair>& pairs, double beta,
                       const ModelConfig& cfg, AdamW* opt, double lr) {
  if (pairs.empty()) throw DomainError("no preference pairs");
  DpoBatchResult out;
  detail::GraphCtx g = detail::make_ctx(policy, cfg, opt != nullptr);
  std::vector<int> pair_losses;
  std::map<std::string, std::pair<double, int>> tag_acc;
  for (const PreferencePair& pr : pairs) {
    if (pr.chosen.frames() > cfg.max_frames ||
        pr.rejected.frames() > cfg.max_frames) {
      ++out.skipped;
      continue;
    }
    const double lref_c = sequence_logprob(pr.chosen, reference, cfg);
    const double lref_r = sequence_logprob(pr.rejected, reference, cfg);
    PairGraph pg;
    int ll_c = loglik_node(g, pr.chosen, &pg.logpi_c);
    int ll_r = loglik_node(g, pr.rejected, &pg.logpi_r);
    int diff = g.tape.add(ll_c, g.tape.scale(ll_r, -1.0));
    int z = g.tape.scale(diff, beta);
    Mat shift(1, 1);
    shift.at(0, 0) = -beta * (lref_c - lref_r);
    z = g.tape.add_const(z, shift);
    int pl = g.tape.softplus(g.tape.scale(z, -1.0));
    pair_losses.push_back(pl);
    const double plv = g.tape.val(pl).at(0, 0);
    out.loss += plv;
    out.margin += pg.logpi_c - pg.logpi_r;
    auto& acc = tag_acc[pr.tag];
    acc.first += plv;
    acc.second += 1;
    ++out.scored;
  }
  if (out.scored == 0) throw DomainError("every preference pair exceeds the context");
  out.loss /= out.scored;
  out.margin /= out.scored;
  for (auto& [tag, acc] : tag_acc) out.tag_loss[tag] = acc.first / acc.second;
  if (opt) {
    int total = g.tape.scale(g.tape.sum_scalars(pair_losses),
                             1.0 / out.scored);
    g.tape.backward(total);
    GradMap grads;
    detail::accumulate_grads(g, grads);
    opt->step(policy, grads, lr);
  }
  return out;
}

}  // namespace

DpoBatchResult dpo_loss(const std::vector<PreferencePair>& pairs,
                        const ParamSet& policy, const ParamSet& reference,
                        double beta, const ModelConfig& cfg) {
  return dpo_run(const_cast<ParamSet&>(policy), reference, pairs, beta, cfg,
                 nullptr, 0.0);
}

DpoBatchResult dpo_step(ParamSet& policy, const ParamSet& reference,
                        const std::vector<PreferencePair>& pairs, double beta,
                        const ModelConfig& cfg, AdamW& opt, double lr) {
  return dpo_run(policy, reference, pairs, beta, cfg, &opt, lr);
}

}  // namespace dualres
