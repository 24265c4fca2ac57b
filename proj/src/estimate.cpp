#include "sltc/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "bfgs.hpp"
#include "sltc/csv.hpp"
#include "sltc/errors.hpp"
#include "sltc/kernels.hpp"
#include "sltc/linalg.hpp"
#include "sltc/rng.hpp"

namespace sltc {

namespace {

std::unordered_map<long long, std::size_t> index_by_id(std::span<const Establishment> ests) {
  std::unordered_map<long long, std::size_t> m;
  m.reserve(ests.size());
  for (std::size_t i = 0; i < ests.size(); ++i) m.emplace(ests[i].id, i);
  return m;
}

void check_parallel(std::span<const Shipment> shipments, std::span<const Contract> contracts) {
  if (shipments.size() != contracts.size())
    throw DimensionMismatch("shipments not parallel to contracts");
  for (std::size_t i = 0; i < shipments.size(); ++i)
    if (shipments[i].contract != contracts[i].id)
      throw DimensionMismatch("shipment " + std::to_string(i) +
                              " does not belong to contract " + std::to_string(contracts[i].id));
}

}  // namespace

std::map<long long, long long> qo_instance_counts(std::span<const NodeTour> tours) {
  std::map<long long, long long> counts;
  for (const NodeTour& t : tours)
    for (const TourStop& stop : t.stops)
      for (long long contract : stop.shipments) ++counts[contract];
  return counts;
}

std::vector<double> quasi_shipment_freq(std::span<const Shipment> shipments,
                                        const std::map<long long, long long>& initial,
                                        const std::map<long long, long long>& qo) {
  std::vector<double> f_hat(shipments.size());
  for (std::size_t i = 0; i < shipments.size(); ++i) {
    auto count = [&](const std::map<long long, long long>& m) {
      auto it = m.find(shipments[i].contract);
      return it == m.end() ? 0LL : it->second;
    };
    long long n0 = count(initial);
    long long n1 = count(qo);
    f_hat[i] = n0 > 0 ? shipments[i].freq_per_year * static_cast<double>(n1) /
                            static_cast<double>(n0)
                      : shipments[i].freq_per_year;
  }
  return f_hat;
}

std::vector<double> quasi_contract_sizes(std::span<const Shipment> shipments,
                                         std::span<const double> f_hat,
                                         std::span<const Contract> contracts) {
  check_parallel(shipments, contracts);
  if (f_hat.size() != shipments.size())
    throw DimensionMismatch("f_hat not parallel to shipments");
  std::vector<double> x_hat(contracts.size());
  for (std::size_t i = 0; i < contracts.size(); ++i) {
    if (!(shipments[i].freq_per_year > 0.0))
      throw ZeroInitialFrequency("contract " + std::to_string(contracts[i].id) +
                                 " has no positive initial frequency");
    x_hat[i] = f_hat[i] / shipments[i].freq_per_year * contracts[i].x_size;
  }
  return x_hat;
}

EstablishmentFlows quasi_flows(std::span<const Establishment> ests,
                               std::span<const Contract> contracts,
                               std::span<const double> x_hat) {
  if (x_hat.size() != contracts.size())
    throw DimensionMismatch("x_hat not parallel to contracts");
  auto by_id = index_by_id(ests);
  EstablishmentFlows flows;
  flows.production.assign(ests.size(), 0.0);
  flows.consumption.assign(ests.size(), 0.0);
  for (std::size_t i = 0; i < contracts.size(); ++i) {
    flows.production[by_id.at(contracts[i].supplier)] += x_hat[i];
    flows.consumption[by_id.at(contracts[i].receiver)] += x_hat[i];
  }
  return flows;
}

GenerationParams reestimate_generation(std::span<const Establishment> ests,
                                       std::span<const Contract> contracts,
                                       std::span<const double> x_hat,
                                       const GenerationParams& previous,
                                       EstimationReport* report) {
  EstablishmentFlows q = quasi_flows(ests, contracts, x_hat);

  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < ests.size(); ++i) by_group[ests[i].group].push_back(i);

  GenerationParams out = previous;
  auto note_block = [&](const std::string& block, const std::string& group, std::size_t n,
                        double r2, bool starved, const std::string& note) {
    if (report) report->blocks.push_back({block, group, n, r2, 0, starved, note});
  };

  std::set<std::string> groups;
  for (const auto& [g, idx] : by_group) groups.insert(g);
  for (const auto& [g, p] : previous.production) groups.insert(g);
  for (const auto& [g, p] : previous.consumption) groups.insert(g);

  for (const std::string& g : groups) {
    auto it = by_group.find(g);
    if (it == by_group.end()) {
      note_block("production", g, 0, 0.0, true, "no establishments");
      note_block("consumption", g, 0, 0.0, true, "no establishments");
      continue;
    }
    const std::vector<std::size_t>& members = it->second;
    const std::size_t n = members.size();

    {
      const std::size_t p = 4;
      if (n < p + 1) {
        note_block("production", g, n, 0.0, true, "insufficient observations");
      } else {
        std::vector<double> x(n * p), y(n);
        for (std::size_t r = 0; r < n; ++r) {
          const Establishment& e = ests[members[r]];
          x[r * p + 0] = 1.0;
          x[r * p + 1] = e.floor_area;
          x[r * p + 2] = e.employment;
          x[r * p + 3] = e.floor_area * e.employment;
          y[r] = q.production[members[r]];
        }
        try {
          OlsFit fit = ols(x.data(), y.data(), n, p);
          out.production[g] = {fit.beta[0], fit.beta[1], fit.beta[2], fit.beta[3]};
          note_block("production", g, n, fit.r2, false, "");
        } catch (const InsufficientObservations& e) {
          note_block("production", g, n, 0.0, true, e.what());
        }
      }
    }
    {
      const std::size_t p = 5;
      if (n < p + 1) {
        note_block("consumption", g, n, 0.0, true, "insufficient observations");
      } else {
        std::vector<double> x(n * p), y(n);
        for (std::size_t r = 0; r < n; ++r) {
          const Establishment& e = ests[members[r]];
          x[r * p + 0] = 1.0;
          x[r * p + 1] = e.floor_area;
          x[r * p + 2] = e.employment;
          x[r * p + 3] = e.floor_area * e.employment;
          x[r * p + 4] = q.production[members[r]];
          y[r] = q.consumption[members[r]];
        }
        try {
          OlsFit fit = ols(x.data(), y.data(), n, p);
          out.consumption[g] = {fit.beta[0], fit.beta[1], fit.beta[2], fit.beta[3], fit.beta[4]};
          note_block("consumption", g, n, fit.r2, false, "");
        } catch (const InsufficientObservations& e) {
          note_block("consumption", g, n, 0.0, true, e.what());
        }
      }
    }
  }
  return out;
}

const std::vector<double>& OriginDistribution::row(long long dest_zone) const {
  auto it = rows.find(dest_zone);
  if (it == rows.end())
    throw EmptyOriginRow("zone " + std::to_string(dest_zone) + " received no QO shipments");
  return it->second;
}

OriginDistribution origin_distribution(const std::map<long long, long long>& qo,
                                       std::span<const Contract> contracts,
                                       std::span<const Establishment> ests,
                                       const RoadNetwork& net) {
  OriginDistribution d;
  d.zones = net.zone_ids();
  std::unordered_map<long long, std::size_t> zone_slot;
  for (std::size_t i = 0; i < d.zones.size(); ++i) zone_slot.emplace(d.zones[i], i);
  auto by_id = index_by_id(ests);

  for (const Contract& c : contracts) {
    auto it = qo.find(c.id);
    if (it == qo.end() || it->second <= 0) continue;
    long long origin = ests[by_id.at(c.supplier)].zone;
    long long dest = ests[by_id.at(c.receiver)].zone;
    auto [row_it, fresh] = d.rows.try_emplace(dest, std::vector<double>(d.zones.size(), 0.0));
    row_it->second[zone_slot.at(origin)] += static_cast<double>(it->second);
  }
  for (auto& [dest, row] : d.rows) {
    double total = kern::sum(row.data(), row.size());
    for (double& v : row) v /= total;
  }
  for (long long z : d.zones)
    if (!d.rows.count(z)) d.empty_rows.push_back(z);
  return d;
}

ReassignResult reassign_suppliers(std::span<const Contract> contracts,
                                  std::span<const double> x_hat,
                                  const OriginDistribution& dist,
                                  std::span<const Establishment> ests,
                                  const EstablishmentFlows& flows, const SkimMatrix& skim,
                                  const SupplierChoiceParams& p, const SelectionConfig& cfg,
                                  std::uint64_t seed) {
  if (x_hat.size() != contracts.size())
    throw DimensionMismatch("x_hat not parallel to contracts");
  if (flows.production.size() != ests.size())
    throw DimensionMismatch("flows not parallel to establishments");
  auto by_id = index_by_id(ests);
  std::unordered_map<long long, std::vector<std::size_t>> by_zone;
  for (std::size_t i = 0; i < ests.size(); ++i) by_zone[ests[i].zone].push_back(i);

  ReassignResult res;
  res.supplier.resize(contracts.size());
  res.outcome.resize(contracts.size());
  std::vector<std::size_t> cand;
  std::vector<double> util, probs;

  for (std::size_t i = 0; i < contracts.size(); ++i) {
    const Contract& c = contracts[i];
    res.supplier[i] = c.supplier;
    if (!(x_hat[i] > 0.0)) {
      res.outcome[i] = ReassignOutcome::kept_zero_qo;
      continue;
    }
    const Establishment& rec = ests[by_id.at(c.receiver)];

    const std::vector<double>* row = nullptr;
    try {
      row = &dist.row(rec.zone);
    } catch (const EmptyOriginRow&) {
      res.outcome[i] = ReassignOutcome::kept_empty_row;
      continue;
    }

    Rng rng(substream(seed, Stream::Reassign, static_cast<std::uint64_t>(c.id)));
    long long zone = dist.zones[rng.sample_discrete(*row)];

    cand.clear();
    auto zit = by_zone.find(zone);
    if (zit != by_zone.end()) {
      for (std::size_t e : zit->second) {
        if (ests[e].id == c.receiver || !(flows.production[e] > 0.0)) continue;
        if (commodity_of(ests[e].group) != c.commodity) continue;
        cand.push_back(e);
      }
    }
    if (cand.empty()) {
      res.outcome[i] = ReassignOutcome::kept_no_candidate;
      continue;
    }

    EtaDraws draws{rng.normal(), rng.normal(), rng.normal()};
    util.resize(cand.size());
    for (std::size_t k = 0; k < cand.size(); ++k) {
      const Establishment& sup = ests[cand[k]];
      auto pit = p.by_epg.find(make_epg(c.commodity, rec.function, sup.function));
      if (pit == p.by_epg.end())
        throw MissingGroupParams("no supplier-choice parameters for epg \"" +
                                 make_epg(c.commodity, rec.function, sup.function) + "\"");
      double t = skim.seconds(rec.zone, sup.zone);
      if (sup.zone == rec.zone) t = std::max(t, cfg.intra_zone_floor_s);
      util[k] = supplier_utility(pit->second, t, flows.production[cand[k]], x_hat[i],
                                 sup.function, draws);
    }
    probs.resize(util.size());
    kern::softmax(util.data(), probs.data(), util.size());
    res.supplier[i] = ests[cand[rng.sample_discrete(probs)]].id;
    res.outcome[i] = ReassignOutcome::reassigned;
  }
  return res;
}

std::vector<ChoiceObservation> sample_choice_sets(std::span<const Contract> contracts,
                                                  std::span<const double> x_hat,
                                                  const ReassignResult& assigned,
                                                  std::span<const Establishment> ests,
                                                  const EstablishmentFlows& flows,
                                                  const SkimMatrix& skim,
                                                  const SelectionConfig& cfg,
                                                  std::size_t set_size, std::uint64_t seed) {
  if (x_hat.size() != contracts.size() || assigned.supplier.size() != contracts.size())
    throw DimensionMismatch("assignment not parallel to contracts");
  if (set_size < 1) throw InvalidConfig("choice set size must be at least 1");
  auto by_id = index_by_id(ests);

  // Supplier pools keyed by commodity and function; only establishments with
  // positive production can appear in a utility.
  std::map<std::pair<std::string, Function>, std::vector<std::size_t>> pools;
  for (std::size_t e = 0; e < ests.size(); ++e) {
    if (!(flows.production[e] > 0.0)) continue;
    pools[{commodity_of(ests[e].group), ests[e].function}].push_back(e);
  }

  std::vector<ChoiceObservation> obs;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < contracts.size(); ++i) {
    if (!(x_hat[i] > 0.0)) continue;
    const Contract& c = contracts[i];
    const Establishment& rec = ests[by_id.at(c.receiver)];
    const Establishment& sup = ests[by_id.at(assigned.supplier[i])];

    pool.clear();
    auto pit = pools.find({c.commodity, sup.function});
    if (pit != pools.end()) {
      for (std::size_t e : pit->second)
        if (ests[e].id != c.receiver && ests[e].id != sup.id) pool.push_back(e);
    }

    ChoiceObservation o;
    o.contract = c.id;
    o.epg = make_epg(c.commodity, rec.function, sup.function);
    o.demand = x_hat[i];
    o.short_set = pool.size() + 1 < set_size;

    Rng rng(substream(seed, Stream::ChoiceSets, static_cast<std::uint64_t>(c.id)));
    auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(pool.size()),
                                                static_cast<std::uint32_t>(set_size - 1));
    auto push_alt = [&](const Establishment& s) {
      double t = skim.seconds(rec.zone, s.zone);
      if (s.zone == rec.zone) t = std::max(t, cfg.intra_zone_floor_s);
      o.alts.push_back({s.id, t, flows.production[by_id.at(s.id)], s.function});
    };
    for (std::uint32_t k : picks) push_alt(ests[pool[k]]);
    push_alt(sup);
    o.chosen = static_cast<std::uint32_t>(o.alts.size() - 1);
    obs.push_back(std::move(o));
  }
  return obs;
}

namespace {

// Error-component composition of a supplier function: which eta draws enter
// the utility. office/retail share one composition, so a set drawn from a
// single establishment-pair group is always composition-uniform and its
// conditional probability does not depend on the draw at all.
std::uint8_t comp_of(Function f) {
  switch (f) {
    case Function::office:
    case Function::retail: return 0;
    case Function::logistics_facility: return 1;
    case Function::factory: return 2;
  }
  return 2;
}

struct SmlPrep {
  std::vector<std::uint32_t> offset;  // n_obs + 1, into the flat alt arrays
  std::vector<std::uint32_t> chosen;  // absolute alt index per observation
  std::vector<double> ln_demand;      // per observation
  std::vector<long long> contract;    // per observation, keys the draw stream
  std::vector<char> uniform;          // per observation: single composition
  std::vector<double> ln_time, ln_prod;
  std::vector<std::uint8_t> comp;
  bool needs_draws = false;
};

SmlPrep prepare(std::span<const ChoiceObservation> obs) {
  SmlPrep p;
  p.offset.push_back(0);
  for (const ChoiceObservation& o : obs) {
    if (o.alts.empty()) throw EmptyInput("choice observation without alternatives");
    if (o.chosen >= o.alts.size())
      throw DimensionMismatch("chosen index out of range in contract " +
                              std::to_string(o.contract));
    if (!(o.demand > 0.0)) throw NonPositiveLogArgument("contract demand must be positive");
    const std::uint8_t first = comp_of(o.alts.front().fn);
    bool uniform = true;
    for (const ChoiceAlternative& a : o.alts) {
      if (!(a.time_s > 0.0)) throw NonPositiveLogArgument("travel time must be positive");
      if (!(a.production > 0.0))
        throw NonPositiveLogArgument("supplier production must be positive");
      p.ln_time.push_back(std::log(a.time_s));
      p.ln_prod.push_back(std::log(a.production));
      const std::uint8_t cc = comp_of(a.fn);
      p.comp.push_back(cc);
      if (cc != first) uniform = false;
    }
    p.uniform.push_back(uniform ? 1 : 0);
    if (!uniform) p.needs_draws = true;
    p.ln_demand.push_back(std::log(o.demand));
    p.contract.push_back(o.contract);
    p.chosen.push_back(p.offset.back() + o.chosen);
    p.offset.push_back(static_cast<std::uint32_t>(p.ln_time.size()));
  }
  return p;
}

std::vector<double> make_draws(const SmlPrep& p, int draws, std::uint64_t seed) {
  std::vector<double> etas;
  if (!p.needs_draws) return etas;
  etas.reserve(p.contract.size() * static_cast<std::size_t>(draws) * 3);
  for (long long c : p.contract) {
    Rng rng(substream(seed, Stream::EstimationDraws, static_cast<std::uint64_t>(c)));
    for (int r = 0; r < 3 * draws; ++r) etas.push_back(rng.normal());
  }
  return etas;
}

// theta order: b_time, b_prod, b_demand, b_const, sigma_or, sigma_lf,
// sigma_dws. Composition-uniform observations collapse to plain logit exactly:
// the component is common to every alternative of each draw and cancels in
// the softmax, so the draw average is the draw-free probability and the sigma
// scores vanish.
double eval_sml(const SmlPrep& p, const double* th, int draws,
                std::span<const double> etas, double* grad,
                std::vector<std::array<double, 7>>* scores) {
  const std::size_t n_obs = p.contract.size();
  if (n_obs == 0) throw EmptyInput("no choice observations");
  if (grad) std::fill(grad, grad + 7, 0.0);
  if (scores) {
    scores->clear();
    scores->reserve(n_obs);
  }

  std::vector<double> u, w, prob;
  double ll = 0.0, ll_c = 0.0;  // Kahan
  std::array<double, 7> g_o{};

  for (std::size_t o = 0; o < n_obs; ++o) {
    const std::uint32_t lo = p.offset[o], hi = p.offset[o + 1];
    const std::uint32_t n = hi - lo;
    u.resize(n);
    for (std::uint32_t j = 0; j < n; ++j)
      u[j] = th[0] * p.ln_time[lo + j] + th[1] * p.ln_prod[lo + j] + th[2] * p.ln_demand[o] +
             th[3];
    const std::uint32_t c = p.chosen[o] - lo;

    double ll_o;
    g_o.fill(0.0);
    if (p.uniform[o]) {
      prob.resize(n);
      const double lse = kern::softmax(u.data(), prob.data(), n);
      ll_o = u[c] - lse;
      if (grad || scores) {
        for (std::uint32_t j = 0; j < n; ++j) {
          const double r = (j == c ? 1.0 : 0.0) - prob[j];
          g_o[0] += r * p.ln_time[lo + j];
          g_o[1] += r * p.ln_prod[lo + j];
          g_o[2] += r * p.ln_demand[o];
          g_o[3] += r;
        }
      }
    } else {
      const double* eta = etas.data() + static_cast<std::size_t>(o) * draws * 3;
      double p_sum = 0.0;
      std::array<double, 7> num{};
      w.resize(n);
      prob.resize(n);
      for (int r = 0; r < draws; ++r) {
        const double e_or = eta[3 * r], e_lf = eta[3 * r + 1], e_dws = eta[3 * r + 2];
        for (std::uint32_t j = 0; j < n; ++j) {
          double m = 0.0;
          switch (p.comp[lo + j]) {
            case 0: m = th[4] * e_or + th[6] * e_dws; break;
            case 1: m = th[5] * e_lf + th[6] * e_dws; break;
            default: break;
          }
          w[j] = u[j] + m;
        }
        kern::softmax(w.data(), prob.data(), n);
        const double l_r = prob[c];
        p_sum += l_r;
        if (grad || scores) {
          // l_r * (z_chosen - sum_j prob_j z_j) accumulated per draw.
          std::array<double, 7> zc{}, zbar{};
          for (std::uint32_t j = 0; j < n; ++j) {
            const std::uint8_t cc = p.comp[lo + j];
            const double z4 = cc == 0 ? e_or : 0.0;
            const double z5 = cc == 1 ? e_lf : 0.0;
            const double z6 = cc != 2 ? e_dws : 0.0;
            zbar[0] += prob[j] * p.ln_time[lo + j];
            zbar[1] += prob[j] * p.ln_prod[lo + j];
            zbar[4] += prob[j] * z4;
            zbar[5] += prob[j] * z5;
            zbar[6] += prob[j] * z6;
            if (j == c) {
              zc[0] = p.ln_time[lo + j];
              zc[1] = p.ln_prod[lo + j];
              zc[4] = z4;
              zc[5] = z5;
              zc[6] = z6;
            }
          }
          zbar[2] = p.ln_demand[o];
          zbar[3] = 1.0;
          zc[2] = p.ln_demand[o];
          zc[3] = 1.0;
          for (int k = 0; k < 7; ++k) num[k] += l_r * (zc[k] - zbar[k]);
        }
      }
      const double p_bar = p_sum / draws;
      ll_o = std::log(p_bar);
      if (grad || scores)
        for (int k = 0; k < 7; ++k) g_o[k] = num[k] / p_sum;
    }

    const double yk = ll_o - ll_c;
    const double tk = ll + yk;
    ll_c = (tk - ll) - yk;
    ll = tk;
    if (grad)
      for (int k = 0; k < 7; ++k) grad[k] += g_o[k];
    if (scores) scores->push_back(g_o);
  }

  const double inv_n = 1.0 / static_cast<double>(n_obs);
  if (grad)
    for (int k = 0; k < 7; ++k) grad[k] *= inv_n;
  return ll * inv_n;
}

std::array<double, 7> theta_of(const SsmParams& p) {
  return {p.b_time, p.b_prod, p.b_demand, p.b_const, p.sigma_or, p.sigma_lf, p.sigma_dws};
}

SsmParams params_of(const double* th) {
  // Sign of a sigma is unidentified; report magnitudes.
  return {th[0], th[1],            th[2],            th[3],
          std::fabs(th[4]), std::fabs(th[5]), std::fabs(th[6])};
}

std::array<double, 7> bhhh_std_err(const std::vector<std::array<double, 7>>& scores) {
  std::array<double, 7> se;
  se.fill(std::numeric_limits<double>::infinity());
  double b[49] = {};
  for (const auto& g : scores)
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) b[i * 7 + j] += g[i] * g[j];

  double max_diag = 0.0;
  for (int i = 0; i < 7; ++i) max_diag = std::max(max_diag, b[i * 7 + i]);
  if (max_diag <= 0.0) return se;
  std::vector<int> active;
  for (int i = 0; i < 7; ++i)
    if (b[i * 7 + i] > 1e-12 * max_diag) active.push_back(i);

  const std::size_t m = active.size();
  std::vector<double> sub(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) sub[i * m + j] = b[active[i] * 7 + active[j]];
  try {
    Spd chol(std::move(sub), m);
    std::vector<double> e(m);
    for (std::size_t i = 0; i < m; ++i) {
      std::fill(e.begin(), e.end(), 0.0);
      e[i] = 1.0;
      chol.solve_inplace(e);
      if (e[i] > 0.0) se[active[i]] = std::sqrt(e[i]);
    }
  } catch (const InsufficientObservations&) {
    // Singular information matrix: leave the standard errors infinite.
  }
  return se;
}

}  // namespace

double sml_loglik(std::span<const ChoiceObservation> obs, const SsmParams& p, int draws,
                  std::uint64_t seed, std::span<double> grad) {
  if (draws < 1) throw InvalidConfig("draw count must be positive");
  if (!grad.empty() && grad.size() != 7) throw DimensionMismatch("gradient must have 7 entries");
  SmlPrep prep = prepare(obs);
  std::vector<double> etas = make_draws(prep, draws, seed);
  auto th = theta_of(p);
  return eval_sml(prep, th.data(), draws, etas, grad.empty() ? nullptr : grad.data(), nullptr);
}

SmlFit fit_supplier_epg(std::span<const ChoiceObservation> obs, const SsmParams& start,
                        const SmlOptions& opt, std::uint64_t seed) {
  if (opt.draws < 1) throw InvalidConfig("draw count must be positive");
  SmlPrep prep = prepare(obs);
  std::vector<double> etas = make_draws(prep, opt.draws, seed);

  auto fg = [&](const std::vector<double>& x, std::vector<double>& g) {
    double grad[7];
    const double ll = eval_sml(prep, x.data(), opt.draws, etas, grad, nullptr);
    g.resize(7);
    for (int k = 0; k < 7; ++k) g[k] = -grad[k];
    return -ll;
  };
  auto th0 = theta_of(start);
  BfgsResult r = bfgs_minimize(fg, {th0.begin(), th0.end()}, opt.grad_tol, opt.max_iter);
  if (!r.converged)
    throw NonConvergence("supplier model estimation stopped after " +
                         std::to_string(r.iterations) + " iterations above tolerance");

  std::vector<std::array<double, 7>> scores;
  const double ll = eval_sml(prep, r.x.data(), opt.draws, etas, nullptr, &scores);

  SmlFit fit;
  fit.params = params_of(r.x.data());
  fit.std_err = bhhh_std_err(scores);
  fit.mean_ll = ll;
  fit.n_obs = obs.size();
  fit.draws = opt.draws;
  fit.iterations = r.iterations;
  return fit;
}

SupplierChoiceParams reestimate_supplier_model(std::span<const ChoiceObservation> obs,
                                               const SupplierChoiceParams& previous,
                                               const SmlOptions& opt, std::uint64_t seed,
                                               EstimationReport* report) {
  std::map<std::string, std::vector<ChoiceObservation>> by_epg;
  for (const ChoiceObservation& o : obs) by_epg[o.epg].push_back(o);

  SupplierChoiceParams out = previous;
  out.draws = opt.draws;
  auto note = [&](const std::string& epg, std::size_t n, double ll, bool starved,
                  const std::string& msg) {
    if (report) report->blocks.push_back({"supplier", epg, n, ll, opt.draws, starved, msg});
  };

  std::set<std::string> epgs;
  for (const auto& [e, v] : by_epg) epgs.insert(e);
  for (const auto& [e, v] : previous.by_epg) epgs.insert(e);

  for (const std::string& epg : epgs) {
    auto it = by_epg.find(epg);
    const std::size_t n = it == by_epg.end() ? 0 : it->second.size();
    if (n < opt.min_obs) {
      note(epg, n, 0.0, true, "insufficient observations");
      continue;
    }
    auto prev = previous.by_epg.find(epg);
    if (prev == previous.by_epg.end())
      throw MissingGroupParams("no starting supplier-choice parameters for epg \"" + epg +
                               "\"");
    try {
      SmlFit fit = fit_supplier_epg(it->second, prev->second, opt, seed);
      out.by_epg[epg] = fit.params;
      note(epg, n, fit.mean_ll, false, "");
    } catch (const NonConvergence& e) {
      note(epg, n, 0.0, true, e.what());
    }
  }
  return out;
}

ShipmentSizeParams reestimate_shipment_size(std::span<const Shipment> shipments,
                                            std::span<const Contract> contracts,
                                            std::span<const double> x_hat,
                                            std::span<const Establishment> ests,
                                            const PathIndex& paths,
                                            const std::map<long long, double>& density,
                                            const ShipmentSizeParams& previous,
                                            std::size_t min_obs,
                                            EstimationReport* report) {
  check_parallel(shipments, contracts);
  if (x_hat.size() != contracts.size())
    throw DimensionMismatch("x_hat not parallel to contracts");
  auto by_id = index_by_id(ests);

  struct Obs {
    double ln_s, ln_x, ln_dist, ln_dense;
  };
  std::map<std::string, std::vector<Obs>> by_group;
  for (std::size_t i = 0; i < contracts.size(); ++i) {
    if (!(x_hat[i] > 0.0)) continue;
    const Establishment& rec = ests[by_id.at(contracts[i].receiver)];
    const Establishment& sup = ests[by_id.at(contracts[i].supplier)];
    const double dist_km = std::max(0.1, paths.length_m(sup.node, rec.node) / 1000.0);
    by_group[rec.group].push_back({std::log(shipments[i].size_kg), std::log(x_hat[i]),
                                   std::log(dist_km), std::log(density.at(rec.zone))});
  }

  ShipmentSizeParams out = previous;
  auto note = [&](const std::string& g, std::size_t n, double r2, bool starved,
                  const std::string& msg) {
    if (report) report->blocks.push_back({"shipment_size", g, n, r2, 0, starved, msg});
  };

  std::set<std::string> groups;
  for (const auto& [g, v] : by_group) groups.insert(g);
  for (const auto& [g, v] : previous.by_group) groups.insert(g);

  for (const std::string& g : groups) {
    auto it = by_group.find(g);
    const std::size_t n = it == by_group.end() ? 0 : it->second.size();
    if (n < min_obs) {
      note(g, n, 0.0, true, "insufficient observations");
      continue;
    }
    const std::size_t p = 4;
    std::vector<double> x(n * p), y(n);
    for (std::size_t r = 0; r < n; ++r) {
      const Obs& o = it->second[r];
      x[r * p + 0] = 1.0;
      x[r * p + 1] = o.ln_x;
      x[r * p + 2] = o.ln_dist;
      x[r * p + 3] = o.ln_dense;
      y[r] = o.ln_s;
    }
    try {
      OlsFit fit = ols(x.data(), y.data(), n, p);
      out.by_group[g] = {fit.beta[0], fit.beta[1], fit.beta[2], fit.beta[3]};
      note(g, n, fit.r2, false, "");
    } catch (const InsufficientObservations& e) {
      note(g, n, 0.0, true, e.what());
    }
  }
  return out;
}

void write_qo_shipments(const std::filesystem::path& csv, std::span<const Shipment> shipments,
                        std::span<const Contract> contracts, std::span<const double> f_hat,
                        std::span<const double> x_hat, const ReassignResult& assigned) {
  check_parallel(shipments, contracts);
  CsvWriter w(csv, {"contract_id", "size_kg", "freq_per_year", "f_hat", "x_size_kg",
                    "x_hat_kg", "qo_supplier_id", "reassign_outcome"});
  auto outcome_name = [](ReassignOutcome o) {
    switch (o) {
      case ReassignOutcome::reassigned: return "reassigned";
      case ReassignOutcome::kept_empty_row: return "kept_empty_row";
      case ReassignOutcome::kept_no_candidate: return "kept_no_candidate";
      case ReassignOutcome::kept_zero_qo: return "kept_zero_qo";
    }
    return "unknown";
  };
  for (std::size_t i = 0; i < shipments.size(); ++i) {
    w.field(shipments[i].contract);
    w.field(shipments[i].size_kg);
    w.field(shipments[i].freq_per_year);
    w.field(f_hat[i]);
    w.field(contracts[i].x_size);
    w.field(x_hat[i]);
    w.field(assigned.supplier[i]);
    w.field(outcome_name(assigned.outcome[i]));
    w.end_row();
  }
  w.close();
}

void write_origin_distribution(const std::filesystem::path& csv, const OriginDistribution& d) {
  CsvWriter w(csv, {"dest_zone", "origin_zone", "probability"});
  for (const auto& [dest, row] : d.rows) {
    for (std::size_t k = 0; k < d.zones.size(); ++k) {
      if (row[k] == 0.0) continue;
      w.field(dest);
      w.field(d.zones[k]);
      w.field(row[k]);
      w.end_row();
    }
  }
  w.close();
}

void write_estimation_report(const std::filesystem::path& csv, const EstimationReport& r) {
  CsvWriter w(csv, {"block", "key", "n_obs", "fit", "draws", "starved", "note"});
  for (const EstimationBlock& b : r.blocks) {
    w.field(b.block);
    w.field(b.key);
    w.field(static_cast<long long>(b.n_obs));
    w.field(b.fit);
    w.field(b.draws);
    w.field(b.starved ? 1 : 0);
    w.field(b.note);
    w.end_row();
  }
  w.close();
}

}  // namespace sltc
