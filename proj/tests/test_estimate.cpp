#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sltc/errors.hpp"
#include "sltc/estimate.hpp"
#include "sltc/rng.hpp"

using namespace sltc;

namespace {

RoadNetwork net3() {
  std::vector<RoadNode> nodes = {{1, 0.0, 0.0, 1}, {2, 10000.0, 0.0, 2}, {3, 20000.0, 0.0, 3}};
  std::vector<RoadLink> links = {{12, 1, 2, 10000.0, 600.0},
                                 {21, 2, 1, 10000.0, 600.0},
                                 {23, 2, 3, 10000.0, 600.0},
                                 {32, 3, 2, 10000.0, 600.0}};
  return RoadNetwork(std::move(nodes), std::move(links));
}

Establishment mk(long long id, long long node, long long zone, double floor, double emp,
                 std::string group, Function fn, bool carrier = false) {
  return {id, node, zone, floor, emp, std::move(group), fn, carrier};
}

Contract mkc(long long id, long long receiver, long long supplier, double x_size,
             const std::string& commodity = "g") {
  return {id, receiver, supplier, commodity, x_size, ""};
}

NodeTour tour_serving(long long id, std::vector<std::vector<long long>> stop_contracts) {
  NodeTour t{id, 0, 1, {}, 1000.0};
  long long node = 2;
  for (auto& contracts : stop_contracts) t.stops.push_back({node++, std::move(contracts)});
  return t;
}

SsmParams theta(double bt, double bp, double bd, double bc, double so, double sl, double sd) {
  return {bt, bp, bd, bc, so, sl, sd};
}

}  // namespace

TEST_CASE("estimate: instance counts and quasi frequencies follow the tour ledger") {
  std::vector<NodeTour> initial = {tour_serving(1, {{1, 2}, {1}}), tour_serving(2, {{3}})};
  auto n0 = qo_instance_counts(initial);
  CHECK(n0.at(1) == 2);
  CHECK(n0.at(2) == 1);
  CHECK(n0.at(3) == 1);

  std::vector<Shipment> shipments = {{1, 5.0, 40.0, 1}, {2, 5.0, 80.0, 1}, {3, 5.0, 120.0, 1},
                                     {4, 5.0, 200.0, 0}};

  SUBCASE("identity when nothing changes") {
    auto f_hat = quasi_shipment_freq(shipments, n0, n0);
    CHECK(f_hat == std::vector<double>{40.0, 80.0, 120.0, 200.0});
  }
  SUBCASE("cloned and removed instances scale the frequency") {
    // Tour 1 cloned once, tour 2 removed.
    std::vector<NodeTour> target = {tour_serving(1, {{1, 2}, {1}}),
                                    tour_serving(3, {{1, 2}, {1}})};
    auto n1 = qo_instance_counts(target);
    auto f_hat = quasi_shipment_freq(shipments, n0, n1);
    CHECK(f_hat[0] == doctest::Approx(80.0));   // 2 -> 4 instances
    CHECK(f_hat[1] == doctest::Approx(160.0));  // 1 -> 2
    CHECK(f_hat[2] == 0.0);                     // only instance removed
    CHECK(f_hat[3] == 200.0);                   // never realized, keeps f
  }
}

TEST_CASE("estimate: quasi contract sizes scale by the frequency ratio") {
  std::vector<Contract> contracts = {mkc(1, 10, 20, 10.0), mkc(2, 10, 20, 7.0),
                                     mkc(3, 10, 20, 4.0)};
  std::vector<Shipment> shipments = {{1, 1.0, 2.0, 0}, {2, 1.0, 3.0, 0}, {3, 1.0, 5.0, 0}};
  std::vector<double> f_hat = {4.0, 3.0, 0.0};
  auto x_hat = quasi_contract_sizes(shipments, f_hat, contracts);
  CHECK(x_hat[0] == doctest::Approx(20.0));  // doubled frequency doubles the size
  CHECK(x_hat[1] == doctest::Approx(7.0));   // unchanged frequency keeps it
  CHECK(x_hat[2] == 0.0);                    // zero adjusted frequency empties it

  shipments[0].freq_per_year = 0.0;
  CHECK_THROWS_AS(quasi_contract_sizes(shipments, f_hat, contracts), ZeroInitialFrequency);

  std::vector<Shipment> mismatched = {{9, 1.0, 2.0, 0}};
  std::vector<Contract> one = {mkc(1, 10, 20, 10.0)};
  std::vector<double> fh = {2.0};
  CHECK_THROWS_AS(quasi_contract_sizes(mismatched, fh, one), DimensionMismatch);
}

TEST_CASE("estimate: receiver aggregation equals the shipment-weighted mean ratio") {
  // Three contracts into one receiver with sizes 10, 20, 30 and instance
  // ratios 2, 1/2, 1. The aggregate quasi size over the aggregate initial
  // size must equal the size-weighted mean of f_hat/f.
  std::vector<Establishment> ests = {mk(10, 1, 1, 100, 5, "g.a.retail", Function::retail),
                                     mk(20, 2, 2, 100, 5, "g.a.factory", Function::factory)};
  std::vector<Contract> contracts = {mkc(1, 10, 20, 10.0), mkc(2, 10, 20, 20.0),
                                     mkc(3, 10, 20, 30.0)};
  std::vector<Shipment> shipments = {{1, 1.0, 100.0, 0}, {2, 1.0, 100.0, 0},
                                     {3, 1.0, 100.0, 0}};
  std::map<long long, long long> n0 = {{1, 1}, {2, 2}, {3, 1}};
  std::map<long long, long long> n1 = {{1, 2}, {2, 1}, {3, 1}};

  auto f_hat = quasi_shipment_freq(shipments, n0, n1);
  auto x_hat = quasi_contract_sizes(shipments, f_hat, contracts);
  auto flows = quasi_flows(ests, contracts, x_hat);

  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < contracts.size(); ++i) {
    weighted += f_hat[i] / shipments[i].freq_per_year * contracts[i].x_size;
    total += contracts[i].x_size;
  }
  CHECK(flows.consumption[0] / total == doctest::Approx(weighted / total).epsilon(1e-12));
  CHECK(flows.production[1] == doctest::Approx(flows.consumption[0]).epsilon(1e-12));
}

TEST_CASE("estimate: generation refit recovers exact linear data") {
  // Group A supplies into a sink group and receives from it, so its quasi
  // production and consumption aggregates can be dialed in exactly. The two
  // sides need separate data: a noiseless linear production aggregate is
  // collinear with the consumption design, so consumption recovery uses
  // random production.
  const double tp[4] = {1.0, 0.5, 2.0, 0.02};         // production truth
  const double tc[5] = {3.0, -0.2, 1.5, 0.01, 0.4};   // consumption truth
  std::vector<Establishment> ests;
  const double floors[8] = {100, 150, 220, 90, 310, 180, 260, 130};
  const double emps[8] = {5, 9, 4, 12, 7, 15, 3, 11};
  for (int i = 0; i < 8; ++i)
    ests.push_back(mk(i + 1, 1, 1, floors[i], emps[i], "g.a.retail", Function::retail));
  ests.push_back(mk(100, 2, 2, 400, 20, "g.b.factory", Function::factory));
  ests.push_back(mk(101, 2, 2, 350, 18, "g.b.factory", Function::factory));
  for (int i = 0; i < 4; ++i)
    ests.push_back(mk(200 + i, 3, 3, 120 + 30 * i, 6 + i, "g.b.factory", Function::factory));

  GenerationParams previous;
  previous.production["g.a.retail"] = {0, 0, 0, 0};
  previous.consumption["g.a.retail"] = {0, 0, 0, 0, 0};
  previous.production["g.b.factory"] = {1, 1, 1, 1};
  previous.consumption["g.b.factory"] = {1, 1, 1, 1, 1};
  previous.production["g.gone.office"] = {7, 7, 7, 7};

  SUBCASE("production side") {
    std::vector<Contract> contracts;
    std::vector<double> x_hat;
    for (int i = 0; i < 8; ++i) {
      const double f = floors[i], e = emps[i];
      contracts.push_back(mkc(i + 1, 100, ests[i].id, 1.0));
      x_hat.push_back(tp[0] + tp[1] * f + tp[2] * e + tp[3] * f * e);
    }

    EstimationReport report;
    GenerationParams out = reestimate_generation(ests, contracts, x_hat, previous, &report);

    const ProdParams& bp = out.production.at("g.a.retail");
    CHECK(bp.b_const == doctest::Approx(tp[0]).epsilon(1e-8));
    CHECK(bp.b_floor == doctest::Approx(tp[1]).epsilon(1e-8));
    CHECK(bp.b_emp == doctest::Approx(tp[2]).epsilon(1e-8));
    CHECK(bp.b_floor_emp == doctest::Approx(tp[3]).epsilon(1e-8));

    // The configured group with no establishments is retained and flagged.
    CHECK(out.production.at("g.gone.office").b_const == 7.0);
    bool flagged = false;
    for (const auto& b : report.blocks)
      if (b.key == "g.gone.office" && b.block == "production") flagged = b.starved;
    CHECK(flagged);

    // R2 on noiseless data is 1.
    for (const auto& b : report.blocks)
      if (b.key == "g.a.retail" && b.block == "production")
        CHECK(b.fit == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("consumption side") {
    Rng rnd(mix_seed({0xfee1, 3}));
    std::vector<Contract> contracts;
    std::vector<double> x_hat;
    long long id = 0;
    for (int i = 0; i < 8; ++i) {
      const double f = floors[i], e = emps[i];
      double prod = rnd.uniform(50.0, 4000.0);
      double cons = tc[0] + tc[1] * f + tc[2] * e + tc[3] * f * e + tc[4] * prod;
      contracts.push_back(mkc(++id, 100, ests[i].id, 1.0));
      x_hat.push_back(prod);
      contracts.push_back(mkc(++id, ests[i].id, 100, 1.0));
      x_hat.push_back(cons);
    }

    GenerationParams out = reestimate_generation(ests, contracts, x_hat, previous, nullptr);
    const ConsParams& bc = out.consumption.at("g.a.retail");
    CHECK(bc.b_const == doctest::Approx(tc[0]).epsilon(1e-6));
    CHECK(bc.b_floor == doctest::Approx(tc[1]).epsilon(1e-6));
    CHECK(bc.b_emp == doctest::Approx(tc[2]).epsilon(1e-6));
    CHECK(bc.b_floor_emp == doctest::Approx(tc[3]).epsilon(1e-4));
    CHECK(bc.b_prod == doctest::Approx(tc[4]).epsilon(1e-6));
  }
}

TEST_CASE("estimate: generation refit handles constants and starved groups") {
  std::vector<Establishment> ests;
  const double floors[6] = {100, 150, 220, 90, 310, 180};
  const double emps[6] = {5, 9, 4, 12, 7, 15};
  for (int i = 0; i < 6; ++i)
    ests.push_back(mk(i + 1, 1, 1, floors[i], emps[i], "g.a.retail", Function::retail));
  // A three-member group: below both thresholds.
  for (int i = 0; i < 3; ++i)
    ests.push_back(mk(50 + i, 2, 2, 80 + i * 10, 4 + i, "g.small.office", Function::office));
  ests.push_back(mk(99, 3, 3, 100, 5, "g.sink.factory", Function::factory));

  std::vector<Contract> contracts;
  std::vector<double> x_hat;
  for (int i = 0; i < 6; ++i) {
    contracts.push_back(mkc(i + 1, 99, ests[i].id, 1.0));
    x_hat.push_back(7.0);  // constant production
  }

  GenerationParams previous;
  previous.production["g.a.retail"] = {0, 0, 0, 0};
  previous.consumption["g.a.retail"] = {0, 0, 0, 0, 0};
  previous.production["g.small.office"] = {5, 4, 3, 2};
  previous.consumption["g.small.office"] = {5, 4, 3, 2, 1};
  previous.production["g.sink.factory"] = {8, 8, 8, 8};
  previous.consumption["g.sink.factory"] = {8, 8, 8, 8, 8};

  EstimationReport report;
  GenerationParams out = reestimate_generation(ests, contracts, x_hat, previous, &report);

  const ProdParams& bp = out.production.at("g.a.retail");
  CHECK(bp.b_const == doctest::Approx(7.0).epsilon(1e-8));
  CHECK(std::fabs(bp.b_floor) <= 1e-8);
  CHECK(std::fabs(bp.b_emp) <= 1e-8);
  CHECK(std::fabs(bp.b_floor_emp) <= 1e-8);

  // Starved groups keep previous parameters.
  CHECK(out.production.at("g.small.office").b_const == 5.0);
  CHECK(out.consumption.at("g.small.office").b_prod == 1.0);
  std::size_t starved_rows = 0;
  for (const auto& b : report.blocks)
    if (b.key == "g.small.office" && b.starved) ++starved_rows;
  CHECK(starved_rows == 2);
}

TEST_CASE("estimate: generation refit matches a dense least-squares oracle on noisy data") {
  Rng rng(mix_seed({0xe571, 1}));
  std::vector<Establishment> ests;
  const int n = 24;
  for (int i = 0; i < n; ++i)
    ests.push_back(mk(i + 1, 1, 1, rng.uniform(50, 500), rng.uniform(2, 40), "g.a.retail",
                      Function::retail));
  ests.push_back(mk(500, 2, 2, 100, 5, "g.sink.factory", Function::factory));

  std::vector<Contract> contracts;
  std::vector<double> x_hat;
  for (int i = 0; i < n; ++i) {
    contracts.push_back(mkc(2 * i + 1, 500, ests[i].id, 1.0));
    x_hat.push_back(rng.uniform(10, 5000));
    contracts.push_back(mkc(2 * i + 2, ests[i].id, 500, 1.0));
    x_hat.push_back(rng.uniform(10, 5000));
  }

  GenerationParams previous;
  previous.production["g.a.retail"] = {0, 0, 0, 0};
  previous.consumption["g.a.retail"] = {0, 0, 0, 0, 0};
  previous.production["g.sink.factory"] = {0, 0, 0, 0};
  previous.consumption["g.sink.factory"] = {0, 0, 0, 0, 0};
  GenerationParams out = reestimate_generation(ests, contracts, x_hat, previous, nullptr);

  EstablishmentFlows q = quasi_flows(ests, contracts, x_hat);
  Eigen::MatrixXd xp(n, 4), xc(n, 5);
  Eigen::VectorXd yp(n), yc(n);
  for (int i = 0; i < n; ++i) {
    xp(i, 0) = 1.0;
    xp(i, 1) = ests[i].floor_area;
    xp(i, 2) = ests[i].employment;
    xp(i, 3) = ests[i].floor_area * ests[i].employment;
    for (int j = 0; j < 4; ++j) xc(i, j) = xp(i, j);
    xc(i, 4) = q.production[i];
    yp[i] = q.production[i];
    yc[i] = q.consumption[i];
  }
  Eigen::VectorXd bp = xp.colPivHouseholderQr().solve(yp);
  Eigen::VectorXd bc = xc.colPivHouseholderQr().solve(yc);

  const ProdParams& mp = out.production.at("g.a.retail");
  CHECK(std::fabs(mp.b_const - bp[0]) <= 1e-8);
  CHECK(std::fabs(mp.b_floor - bp[1]) <= 1e-8);
  CHECK(std::fabs(mp.b_emp - bp[2]) <= 1e-8);
  CHECK(std::fabs(mp.b_floor_emp - bp[3]) <= 1e-8);
  const ConsParams& mc = out.consumption.at("g.a.retail");
  CHECK(std::fabs(mc.b_const - bc[0]) <= 1e-8);
  CHECK(std::fabs(mc.b_floor - bc[1]) <= 1e-8);
  CHECK(std::fabs(mc.b_emp - bc[2]) <= 1e-8);
  CHECK(std::fabs(mc.b_floor_emp - bc[3]) <= 1e-8);
  CHECK(std::fabs(mc.b_prod - bc[4]) <= 1e-8);
}

TEST_CASE("estimate: origin distribution normalizes instance counts per destination") {
  RoadNetwork net = net3();
  std::vector<Establishment> ests = {
      mk(1, 1, 1, 100, 5, "g.a.factory", Function::factory),
      mk(2, 2, 2, 100, 5, "g.a.factory", Function::factory),
      mk(3, 3, 3, 100, 5, "g.a.factory", Function::factory),
      mk(4, 3, 3, 100, 5, "g.a.retail", Function::retail),
  };
  std::vector<Contract> contracts = {mkc(1, 4, 1, 10.0), mkc(2, 4, 2, 10.0),
                                     mkc(3, 4, 3, 10.0)};
  std::map<long long, long long> qo = {{1, 2}, {2, 3}, {3, 5}};

  OriginDistribution d = origin_distribution(qo, contracts, ests, net);
  REQUIRE(d.zones == std::vector<long long>{1, 2, 3});
  const std::vector<double>& row = d.row(3);
  CHECK(row[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(row[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(row[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(row[0] + row[1] + row[2] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(d.empty_rows == std::vector<long long>{1, 2});
  CHECK_THROWS_AS(d.row(1), EmptyOriginRow);

  SUBCASE("single origin zone concentrates all mass") {
    std::map<long long, long long> one = {{1, 4}};
    OriginDistribution d1 = origin_distribution(one, contracts, ests, net);
    CHECK(d1.row(3)[0] == 1.0);
  }
  SUBCASE("zero instances leave no row") {
    std::map<long long, long long> none;
    OriginDistribution d0 = origin_distribution(none, contracts, ests, net);
    CHECK(d0.rows.empty());
    CHECK(d0.empty_rows.size() == 3);
  }
}

namespace {

struct ReassignFixture {
  RoadNetwork net = net3();
  SkimMatrix skim = SkimMatrix::build(net);
  std::vector<Establishment> ests;
  EstablishmentFlows flows;
  SupplierChoiceParams params;
  SelectionConfig cfg;

  ReassignFixture() {
    ests = {
        mk(10, 1, 1, 100, 5, "g.a.factory", Function::factory),
        mk(20, 2, 2, 100, 5, "g.a.factory", Function::factory),
        mk(30, 3, 3, 100, 5, "g.a.office", Function::office),
    };
    flows.production = {500.0, 500.0, 0.0};
    flows.consumption = {0.0, 0.0, 900.0};
    params.by_epg[make_epg("g", Function::office, Function::factory)] =
        theta(-1.0, 0.5, 0.1, 0.0, 0.0, 0.0, 0.0);
  }

  OriginDistribution dist(std::vector<double> row3) {
    OriginDistribution d;
    d.zones = {1, 2, 3};
    d.rows[3] = std::move(row3);
    d.empty_rows = {1, 2};
    return d;
  }
};

}  // namespace

TEST_CASE("estimate: reassignment samples zones then suppliers") {
  ReassignFixture fx;

  SUBCASE("degenerate distribution always lands on the only supplier") {
    std::vector<Contract> contracts;
    for (long long i = 1; i <= 50; ++i) contracts.push_back(mkc(i, 30, 20, 100.0));
    std::vector<double> x_hat(contracts.size(), 100.0);
    OriginDistribution d = fx.dist({1.0, 0.0, 0.0});
    ReassignResult r = reassign_suppliers(contracts, x_hat, d, fx.ests, fx.flows, fx.skim,
                                          fx.params, fx.cfg, 7);
    for (std::size_t i = 0; i < contracts.size(); ++i) {
      CHECK(r.supplier[i] == 10);
      CHECK(r.outcome[i] == ReassignOutcome::reassigned);
    }
  }

  SUBCASE("uniform two-zone distribution splits shares evenly") {
    const int n = 10000;
    std::vector<Contract> contracts;
    for (int i = 1; i <= n; ++i) contracts.push_back(mkc(i, 30, 10, 100.0));
    std::vector<double> x_hat(contracts.size(), 100.0);
    OriginDistribution d = fx.dist({0.5, 0.5, 0.0});
    ReassignResult r = reassign_suppliers(contracts, x_hat, d, fx.ests, fx.flows, fx.skim,
                                          fx.params, fx.cfg, 7);
    int zone1 = 0;
    for (long long s : r.supplier) zone1 += s == 10 ? 1 : 0;
    // Binomial(10000, 0.5): 3 sigma is 150.
    CHECK(zone1 >= 5000 - 150);
    CHECK(zone1 <= 5000 + 150);
  }

  SUBCASE("fallbacks keep the current supplier and record the reason") {
    std::vector<Contract> contracts = {mkc(1, 30, 20, 100.0), mkc(2, 30, 20, 100.0),
                                       mkc(3, 30, 20, 100.0)};
    std::vector<double> x_hat = {100.0, 100.0, 0.0};
    OriginDistribution d = fx.dist({0.0, 0.0, 1.0});  // zone 3 has no factory supplier
    ReassignResult r = reassign_suppliers(contracts, x_hat, d, fx.ests, fx.flows, fx.skim,
                                          fx.params, fx.cfg, 7);
    CHECK(r.supplier[0] == 20);
    CHECK(r.outcome[0] == ReassignOutcome::kept_no_candidate);
    CHECK(r.outcome[2] == ReassignOutcome::kept_zero_qo);

    OriginDistribution empty;
    empty.zones = {1, 2, 3};
    empty.empty_rows = {1, 2, 3};
    ReassignResult r2 = reassign_suppliers(contracts, x_hat, empty, fx.ests, fx.flows, fx.skim,
                                           fx.params, fx.cfg, 7);
    CHECK(r2.outcome[0] == ReassignOutcome::kept_empty_row);
    CHECK(r2.supplier[0] == 20);
  }

  SUBCASE("same seed reproduces the assignment") {
    std::vector<Contract> contracts;
    for (int i = 1; i <= 200; ++i) contracts.push_back(mkc(i, 30, 10, 100.0));
    std::vector<double> x_hat(contracts.size(), 100.0);
    OriginDistribution d = fx.dist({0.5, 0.5, 0.0});
    ReassignResult a = reassign_suppliers(contracts, x_hat, d, fx.ests, fx.flows, fx.skim,
                                          fx.params, fx.cfg, 99);
    ReassignResult b = reassign_suppliers(contracts, x_hat, d, fx.ests, fx.flows, fx.skim,
                                          fx.params, fx.cfg, 99);
    CHECK(a.supplier == b.supplier);
  }
}

namespace {

struct ChoiceSetFixture {
  RoadNetwork net = net3();
  SkimMatrix skim = SkimMatrix::build(net);
  std::vector<Establishment> ests;
  EstablishmentFlows flows;
  SelectionConfig cfg;

  explicit ChoiceSetFixture(int suppliers) {
    for (int i = 1; i <= suppliers; ++i)
      ests.push_back(mk(i, 1 + (i % 2), 1 + (i % 2), 100, 5, "g.a.factory", Function::factory));
    ests.push_back(mk(999, 3, 3, 100, 5, "g.a.office", Function::office));
    flows.production.assign(ests.size(), 0.0);
    flows.consumption.assign(ests.size(), 0.0);
    for (int i = 0; i < suppliers; ++i) flows.production[i] = 50.0 + i;
  }
};

}  // namespace

TEST_CASE("estimate: choice sets hold the assigned supplier plus distinct alternatives") {
  SUBCASE("large pool gives full-size sets with the chosen member present") {
    ChoiceSetFixture fx(60);
    const int n = 1000;
    std::vector<Contract> contracts;
    std::vector<double> x_hat(n, 500.0);
    ReassignResult assigned;
    for (int i = 0; i < n; ++i) {
      contracts.push_back(mkc(i + 1, 999, 1, 500.0));
      assigned.supplier.push_back(1 + i % 60);
      assigned.outcome.push_back(ReassignOutcome::reassigned);
    }
    auto obs = sample_choice_sets(contracts, x_hat, assigned, fx.ests, fx.flows, fx.skim,
                                  fx.cfg, 50, 3);
    REQUIRE(obs.size() == static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const ChoiceObservation& o = obs[i];
      CHECK(o.alts.size() == 50);
      CHECK_FALSE(o.short_set);
      CHECK(o.alts[o.chosen].supplier == assigned.supplier[i]);
      CHECK(o.epg == "g|office|factory");
      std::set<long long> ids;
      for (const ChoiceAlternative& a : o.alts) CHECK(ids.insert(a.supplier).second);
      CHECK(o.demand == 500.0);
    }
  }

  SUBCASE("pool of exactly fifty uses every supplier") {
    ChoiceSetFixture fx(50);
    std::vector<Contract> contracts = {mkc(1, 999, 1, 500.0)};
    std::vector<double> x_hat = {500.0};
    ReassignResult assigned{{7}, {ReassignOutcome::reassigned}};
    auto obs = sample_choice_sets(contracts, x_hat, assigned, fx.ests, fx.flows, fx.skim,
                                  fx.cfg, 50, 3);
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].alts.size() == 50);
    CHECK_FALSE(obs[0].short_set);
    std::set<long long> ids;
    for (const ChoiceAlternative& a : obs[0].alts) ids.insert(a.supplier);
    CHECK(ids.size() == 50);
    CHECK(*ids.begin() == 1);
    CHECK(*ids.rbegin() == 50);
  }

  SUBCASE("small pool takes everything and flags the set short") {
    ChoiceSetFixture fx(30);
    std::vector<Contract> contracts = {mkc(1, 999, 1, 500.0)};
    std::vector<double> x_hat = {500.0};
    ReassignResult assigned{{12}, {ReassignOutcome::reassigned}};
    auto obs = sample_choice_sets(contracts, x_hat, assigned, fx.ests, fx.flows, fx.skim,
                                  fx.cfg, 50, 3);
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].alts.size() == 30);
    CHECK(obs[0].short_set);
  }

  SUBCASE("contracts without quasi activity produce no observation") {
    ChoiceSetFixture fx(60);
    std::vector<Contract> contracts = {mkc(1, 999, 1, 500.0), mkc(2, 999, 1, 500.0)};
    std::vector<double> x_hat = {0.0, 500.0};
    ReassignResult assigned{{1, 2},
                            {ReassignOutcome::kept_zero_qo, ReassignOutcome::reassigned}};
    auto obs = sample_choice_sets(contracts, x_hat, assigned, fx.ests, fx.flows, fx.skim,
                                  fx.cfg, 50, 3);
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].contract == 2);
  }
}

namespace {

// Synthetic mixed-composition observations with choices sampled from the
// model itself. The generation draws are independent of the estimation
// stream.
std::vector<ChoiceObservation> synth_mixed_obs(int n_obs, int n_alts, const SsmParams& truth,
                                               std::uint64_t seed) {
  std::vector<ChoiceObservation> obs;
  obs.reserve(n_obs);
  const Function fns[3] = {Function::office, Function::logistics_facility, Function::factory};
  for (int o = 0; o < n_obs; ++o) {
    Rng rng(mix_seed({seed, 0xda7aULL, static_cast<std::uint64_t>(o)}));
    ChoiceObservation co;
    co.contract = o + 1;
    co.epg = "mixed";
    co.demand = rng.uniform(100.0, 10000.0);
    EtaDraws draws{rng.normal(), rng.normal(), rng.normal()};
    std::vector<double> utils(n_alts);
    for (int j = 0; j < n_alts; ++j) {
      ChoiceAlternative a;
      a.supplier = j + 1;
      a.time_s = rng.uniform(300.0, 5400.0);
      a.production = rng.uniform(50.0, 50000.0);
      a.fn = fns[j % 3];
      co.alts.push_back(a);
      utils[j] = supplier_utility(truth, a.time_s, a.production, co.demand, a.fn, draws);
    }
    auto probs = supplier_choice_prob(utils);
    co.chosen = static_cast<std::uint32_t>(rng.sample_discrete(probs));
    obs.push_back(std::move(co));
  }
  return obs;
}

std::vector<ChoiceObservation> synth_logit_obs(int n_obs, int n_alts, const SsmParams& truth,
                                               std::uint64_t seed) {
  auto obs = synth_mixed_obs(n_obs, n_alts, truth, seed);
  for (auto& o : obs)
    for (auto& a : o.alts) a.fn = Function::factory;
  // Re-sample choices under the homogeneous utilities.
  for (int i = 0; i < n_obs; ++i) {
    Rng rng(mix_seed({seed, 0xc401ceULL, static_cast<std::uint64_t>(i)}));
    std::vector<double> utils(obs[i].alts.size());
    for (std::size_t j = 0; j < utils.size(); ++j)
      utils[j] = supplier_utility(truth, obs[i].alts[j].time_s, obs[i].alts[j].production,
                                  obs[i].demand, Function::factory, {0, 0, 0});
    auto probs = supplier_choice_prob(utils);
    obs[i].chosen = static_cast<std::uint32_t>(rng.sample_discrete(probs));
  }
  return obs;
}

}  // namespace

TEST_CASE("estimate: simulated likelihood gradient matches finite differences") {
  SsmParams p = theta(-1.2, 0.8, 0.3, 0.5, 0.6, 0.4, 0.7);
  auto obs = synth_mixed_obs(6, 5, p, 21);
  const int draws = 25;
  const std::uint64_t seed = 404;

  std::vector<double> grad(7);
  double ll = sml_loglik(obs, p, draws, seed, grad);
  CHECK(std::isfinite(ll));

  auto eval_at = [&](int k, double delta) {
    double th[7] = {p.b_time, p.b_prod, p.b_demand, p.b_const,
                    p.sigma_or, p.sigma_lf, p.sigma_dws};
    th[k] += delta;
    return sml_loglik(obs, theta(th[0], th[1], th[2], th[3], th[4], th[5], th[6]), draws,
                      seed);
  };
  const double h = 1e-6;
  for (int k = 0; k < 7; ++k) {
    double fd = (eval_at(k, h) - eval_at(k, -h)) / (2.0 * h);
    CHECK(std::fabs(grad[k] - fd) <= 1e-5);
  }
}

TEST_CASE("estimate: uniform-composition sets make the likelihood draw-free") {
  SsmParams p = theta(-1.0, 0.6, 0.2, 0.1, 0.9, 0.7, 0.5);
  auto obs = synth_logit_obs(40, 8, p, 33);

  // The error components cancel inside each choice set, so the value cannot
  // depend on the draw count or the draw seed, and the sigma gradient is
  // exactly zero.
  std::vector<double> g1(7), g2(7);
  double a = sml_loglik(obs, p, 1, 11, g1);
  double b = sml_loglik(obs, p, 200, 12, g2);
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
  CHECK(g1[4] == 0.0);
  CHECK(g1[5] == 0.0);
  CHECK(g1[6] == 0.0);

  const double h = 1e-6;
  auto shift = [&](int k, double d) {
    double th[7] = {p.b_time, p.b_prod, p.b_demand, p.b_const,
                    p.sigma_or, p.sigma_lf, p.sigma_dws};
    th[k] += d;
    return sml_loglik(obs, theta(th[0], th[1], th[2], th[3], th[4], th[5], th[6]), 1, 11);
  };
  for (int k = 0; k < 2; ++k) {
    double fd = (shift(k, h) - shift(k, -h)) / (2.0 * h);
    CHECK(std::fabs(g1[k] - fd) <= 1e-5);
  }
}

TEST_CASE("estimate: likelihood is invariant under alternative relabeling") {
  SsmParams p = theta(-1.1, 0.7, 0.2, 0.3, 0.5, 0.4, 0.6);
  auto obs = synth_mixed_obs(20, 6, p, 55);
  double base = sml_loglik(obs, p, 30, 9);

  auto rotated = obs;
  for (auto& o : rotated) {
    std::rotate(o.alts.begin(), o.alts.begin() + 2, o.alts.end());
    o.chosen = static_cast<std::uint32_t>((o.chosen + o.alts.size() - 2) % o.alts.size());
  }
  double rot = sml_loglik(rotated, p, 30, 9);
  CHECK(base == doctest::Approx(rot).epsilon(1e-12));
}

TEST_CASE("estimate: likelihood peaks near the generating parameters") {
  SsmParams truth = theta(-1.3, 0.9, 0.2, 0.1, 0.8, 0.5, 0.6);
  auto obs = synth_mixed_obs(2000, 8, truth, 71);
  SsmParams perturbed = truth;
  perturbed.b_time += 0.5;
  double ll_truth = sml_loglik(obs, truth, 50, 13);
  double ll_pert = sml_loglik(obs, perturbed, 50, 13);
  CHECK(ll_truth >= ll_pert);
}

TEST_CASE("estimate: supplier refit recovers plain-logit attribute coefficients") {
  SsmParams truth = theta(-1.0, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0);
  auto obs = synth_logit_obs(20000, 10, truth, 91);

  SmlOptions opt;
  opt.draws = 100;
  SmlFit fit = fit_supplier_epg(obs, theta(-0.5, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0), opt, 17);
  CHECK(fit.params.b_time >= -1.15);
  CHECK(fit.params.b_time <= -0.85);
  CHECK(fit.params.b_prod >= 0.45);
  CHECK(fit.params.b_prod <= 0.75);
  CHECK(fit.n_obs == 20000);
  CHECK(std::isfinite(fit.mean_ll));
  // Attribute coefficients are identified, so their standard errors are
  // finite and small on this sample size.
  CHECK(fit.std_err[0] < 0.1);
  CHECK(fit.std_err[1] < 0.1);
}

TEST_CASE("estimate: uninformative data leaves the time coefficient at zero") {
  // Every alternative identical: probabilities are flat whatever the
  // parameters, the score is identically zero, and the information matrix is
  // singular.
  std::vector<ChoiceObservation> obs;
  for (int i = 0; i < 40; ++i) {
    ChoiceObservation o;
    o.contract = i + 1;
    o.epg = "flat";
    o.demand = 1000.0;
    for (int j = 0; j < 5; ++j) o.alts.push_back({j + 1, 600.0, 400.0, Function::factory});
    o.chosen = static_cast<std::uint32_t>(i % 5);
    obs.push_back(std::move(o));
  }
  SmlOptions opt;
  SmlFit fit = fit_supplier_epg(obs, theta(0, 0, 0, 0, 0, 0, 0), opt, 3);
  CHECK(fit.params.b_time == 0.0);
  CHECK(std::isinf(fit.std_err[0]));
  CHECK(std::fabs(fit.params.b_time - 0.0) <= 2.0 * fit.std_err[0]);
}

TEST_CASE("estimate: supplier refit honors thresholds and convergence flags") {
  SsmParams truth = theta(-1.0, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0);
  auto good = synth_logit_obs(200, 8, truth, 101);
  for (auto& o : good) o.epg = "g|office|factory";
  auto sparse = synth_logit_obs(5, 8, truth, 102);
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    sparse[i].epg = "g|office|office";
    sparse[i].contract = 100000 + static_cast<long long>(i);
  }
  std::vector<ChoiceObservation> all = good;
  all.insert(all.end(), sparse.begin(), sparse.end());

  SupplierChoiceParams previous;
  previous.by_epg["g|office|factory"] = theta(-0.5, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0);
  previous.by_epg["g|office|office"] = theta(-2.0, 1.0, 0.5, 0.5, 0.1, 0.1, 0.1);
  previous.by_epg["g|retail|factory"] = theta(-3.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0);

  SmlOptions opt;
  opt.draws = 40;
  EstimationReport report;
  SupplierChoiceParams out = reestimate_supplier_model(all, previous, opt, 5, &report);

  CHECK(out.by_epg.at("g|office|factory").b_time != -0.5);
  CHECK(out.by_epg.at("g|office|office").b_time == -2.0);   // too few observations
  CHECK(out.by_epg.at("g|retail|factory").b_time == -3.0);  // no observations at all
  CHECK(out.draws == 40);

  std::map<std::string, bool> starved;
  for (const auto& b : report.blocks) starved[b.key] = b.starved;
  CHECK_FALSE(starved.at("g|office|factory"));
  CHECK(starved.at("g|office|office"));
  CHECK(starved.at("g|retail|factory"));

  SUBCASE("an exhausted optimizer raises and the driver retains parameters") {
    SmlOptions rigged;
    rigged.max_iter = 0;
    CHECK_THROWS_AS(
        fit_supplier_epg(good, theta(-0.5, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0), rigged, 5),
        NonConvergence);
    EstimationReport rep2;
    SupplierChoiceParams out2 = reestimate_supplier_model(good, previous, rigged, 5, &rep2);
    CHECK(out2.by_epg.at("g|office|factory").b_time == -0.5);
    bool flagged = false;
    for (const auto& b : rep2.blocks)
      if (b.key == "g|office|factory") flagged = b.starved;
    CHECK(flagged);
  }
}

namespace {

struct SizeFixture {
  RoadNetwork net = net3();
  std::vector<Establishment> ests;
  PathIndex paths;
  std::map<long long, double> density;

  SizeFixture() : paths(mk_paths()) {
    density = establishment_density(ests, net);
  }

  PathIndex mk_paths() {
    // Retail receivers in zones 1 and 2; factory suppliers spread over all
    // three zones so distance varies independently of the receiver zone (and
    // with it the density regressor).
    long long id = 0;
    for (int i = 0; i < 4; ++i)
      ests.push_back(mk(++id, 1, 1, 100, 5, "g.a.retail", Function::retail));
    for (int i = 0; i < 3; ++i)
      ests.push_back(mk(++id, 2, 2, 100, 5, "g.a.retail", Function::retail));
    const long long factory_zone[5] = {3, 3, 1, 2, 3};
    for (int i = 0; i < 5; ++i)
      ests.push_back(mk(++id, factory_zone[i], factory_zone[i], 100, 5, "g.a.factory",
                        Function::factory));
    std::vector<long long> origins = {1, 2, 3};
    return PathIndex(net, origins);
  }
};

}  // namespace

TEST_CASE("estimate: shipment-size refit recovers the generating coefficients") {
  SizeFixture fx;
  const SizeParams truth = {2.0, 0.7, -0.3, 0.25};

  std::vector<Contract> contracts;
  std::vector<Shipment> shipments;
  std::vector<double> x_hat;
  Rng rng(mix_seed({0x517e, 1}));
  long long id = 0;
  for (int rep = 0; rep < 3; ++rep) {
    for (long long rec = 1; rec <= 7; ++rec) {
      ++id;
      long long sup = 8 + (id % 5);
      double x = rng.uniform(100.0, 8000.0);
      contracts.push_back(mkc(id, rec, sup, x));
      const Establishment& r = fx.ests[static_cast<std::size_t>(rec - 1)];
      const Establishment& s = fx.ests[static_cast<std::size_t>(sup - 1)];
      double dist = std::max(0.1, fx.paths.length_m(s.node, r.node) / 1000.0);
      double dense = fx.density.at(r.zone);
      double ln_s = truth.b_const + truth.b_size * std::log(x) + truth.b_dist * std::log(dist) +
                    truth.b_dense * std::log(dense);
      shipments.push_back({id, std::exp(ln_s), 12.0, 0});
      x_hat.push_back(x);
    }
  }

  ShipmentSizeParams previous;
  previous.by_group["g.a.retail"] = {0, 0, 0, 0};
  previous.by_group["g.lost.office"] = {9, 9, 9, 9};

  EstimationReport report;
  ShipmentSizeParams out = reestimate_shipment_size(shipments, contracts, x_hat, fx.ests,
                                                    fx.paths, fx.density, previous, 5, &report);
  const SizeParams& b = out.by_group.at("g.a.retail");
  CHECK(std::fabs(b.b_const - truth.b_const) <= 1e-8);
  CHECK(std::fabs(b.b_size - truth.b_size) <= 1e-8);
  CHECK(std::fabs(b.b_dist - truth.b_dist) <= 1e-8);
  CHECK(std::fabs(b.b_dense - truth.b_dense) <= 1e-8);
  CHECK(out.by_group.at("g.lost.office").b_const == 9.0);

  SUBCASE("contracts without quasi activity are excluded") {
    // Zeroing all but 4 observations starves the group.
    std::vector<double> mostly_zero(x_hat.size(), 0.0);
    for (int i = 0; i < 4; ++i) mostly_zero[i] = x_hat[i];
    EstimationReport rep2;
    ShipmentSizeParams out2 = reestimate_shipment_size(shipments, contracts, mostly_zero,
                                                       fx.ests, fx.paths, fx.density, previous,
                                                       5, &rep2);
    CHECK(out2.by_group.at("g.a.retail").b_const == 0.0);
    bool flagged = false;
    for (const auto& blk : rep2.blocks)
      if (blk.key == "g.a.retail") flagged = blk.starved;
    CHECK(flagged);
  }

  SUBCASE("noisy data matches a dense least-squares oracle") {
    Rng noise(mix_seed({0x517e, 2}));
    auto noisy = shipments;
    for (auto& s : noisy) s.size_kg *= std::exp(0.2 * noise.normal());
    ShipmentSizeParams out3 = reestimate_shipment_size(noisy, contracts, x_hat, fx.ests,
                                                       fx.paths, fx.density, previous, 5,
                                                       nullptr);

    const std::size_t n = contracts.size();
    Eigen::MatrixXd x(n, 4);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Establishment& r = fx.ests[static_cast<std::size_t>(contracts[i].receiver - 1)];
      const Establishment& s = fx.ests[static_cast<std::size_t>(contracts[i].supplier - 1)];
      double dist = std::max(0.1, fx.paths.length_m(s.node, r.node) / 1000.0);
      x(i, 0) = 1.0;
      x(i, 1) = std::log(x_hat[i]);
      x(i, 2) = std::log(dist);
      x(i, 3) = std::log(fx.density.at(r.zone));
      y[i] = std::log(noisy[i].size_kg);
    }
    Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
    const SizeParams& m = out3.by_group.at("g.a.retail");
    CHECK(std::fabs(m.b_const - beta[0]) <= 1e-8);
    CHECK(std::fabs(m.b_size - beta[1]) <= 1e-8);
    CHECK(std::fabs(m.b_dist - beta[2]) <= 1e-8);
    CHECK(std::fabs(m.b_dense - beta[3]) <= 1e-8);
  }
}
