#pragma once

#include <algorithm>
#include <map>
#include <string>

#include "wdro/conic.hpp"
#include "wdro/market_data.hpp"

namespace wdro {

struct Portfolio {
    Vector weights;
    double threshold = 0.0;  // CVaR threshold a
};

using SolveStatus = ConicStatus;

struct SolveReport {
    std::string model;
    Portfolio portfolio;
    double objective = 0.0;
    SolveStatus status = SolveStatus::max_iter;
    double kkt_residual = 0.0;  // max of scaled primal and dual residuals
    double tolerance = 0.0;     // threshold kkt_residual met when status is optimal
    int iterations = 0;
    std::map<std::string, double> duals;
    std::map<std::string, double> parameters;  // radius, box width, gammas, ...

    bool optimal() const { return status == SolveStatus::optimal; }
};

/// Solver settings used by every conic model in the library.
inline ConicSettings default_conic_settings() { return ConicSettings{}; }

/// Fill the status/residual part of a report from a conic solution.
inline void fill_status(SolveReport& rep, const ConicSolution& sol, const ConicSettings& cs) {
    rep.status = sol.status;
    rep.iterations = sol.iterations;
    rep.kkt_residual = std::max(sol.pres, sol.dres);
    rep.tolerance = sol.reduced_accuracy ? 1e3 * cs.feastol : cs.feastol;
    rep.objective = sol.pobj;
}

}  // namespace wdro
