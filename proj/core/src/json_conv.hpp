// Internal JSON conversions shared by the data and harness translation units.
#pragma once

#include "hsam/data.hpp"
#include "json.hpp"

namespace hsam::detail {

inline nlohmann::json task_spec_to_json(const TaskSpec& s) {
  return nlohmann::json{{"task", task_name(s.task)},
                        {"pend_gamma", s.pend_gamma},
                        {"pend_omega", s.pend_omega},
                        {"rd_a", s.rd_a},
                        {"rd_b", s.rd_b},
                        {"rd_kappa", s.rd_kappa},
                        {"duff_alpha", s.duff_alpha},
                        {"duff_beta", s.duff_beta},
                        {"duff_damping", s.duff_damping},
                        {"fine_dt", s.fine_dt},
                        {"subsample", s.subsample},
                        {"m_y", s.m_y},
                        {"grid_d", s.grid_d},
                        {"bc", s.bc == Boundary::neumann ? "neumann" : "periodic"},
                        {"n_train", s.n_train},
                        {"n_val", s.n_val},
                        {"n_test", s.n_test},
                        {"noise_std", s.noise_std},
                        {"noise_on_x", s.noise_on_x},
                        {"rtol", s.rtol},
                        {"atol", s.atol}};
}

inline TaskSpec task_spec_from_json(const nlohmann::json& j, TaskSpec s = {}) {
  s.task = task_from_name(j.at("task").get<std::string>());
  TaskSpec defaults = TaskSpec::defaults(s.task);
  s = defaults;
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("pend_gamma", s.pend_gamma);
  get("pend_omega", s.pend_omega);
  get("rd_a", s.rd_a);
  get("rd_b", s.rd_b);
  get("rd_kappa", s.rd_kappa);
  get("duff_alpha", s.duff_alpha);
  get("duff_beta", s.duff_beta);
  get("duff_damping", s.duff_damping);
  get("fine_dt", s.fine_dt);
  get("subsample", s.subsample);
  get("m_y", s.m_y);
  get("grid_d", s.grid_d);
  if (j.contains("bc")) s.bc = j.at("bc").get<std::string>() == "periodic" ? Boundary::periodic : Boundary::neumann;
  get("n_train", s.n_train);
  get("n_val", s.n_val);
  get("n_test", s.n_test);
  get("noise_std", s.noise_std);
  get("noise_on_x", s.noise_on_x);
  get("rtol", s.rtol);
  get("atol", s.atol);
  return s;
}

}  // namespace hsam::detail
