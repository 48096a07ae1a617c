#pragma once

#include <string_view>
#include <utility>
#include <vector>

namespace quadralg {

// Same bytes as the files in systems/ (checked by the catalog tests).
inline const std::vector<std::pair<std::string_view, std::string_view>>& builtin_sources() {
    static const std::vector<std::pair<std::string_view, std::string_view>> s{
        {"sphere_1param", R"json({
  "name": "sphere_1param",
  "chart": "unit sphere in (th, ph): s1 = sin(th)*cos(ph), s2 = sin(th)*sin(ph), s3 = cos(th); p1 = p_th, p2 = p_ph",
  "coordinates": ["th", "ph"],
  "parameters": ["a3"],
  "metric": {"g": [["1", "0"], ["0", "1/sin(th)^2"]]},
  "potential": "a3/cos(th)^2",
  "symmetries": [
    {"name": "H", "hamiltonian": true},
    {"name": "A1", "terms": {
      "2,0": "sin(ph)^2",
      "1,1": "2*sin(ph)*cos(ph)*cos(th)/sin(th)",
      "0,2": "cos(ph)^2*cos(th)^2/sin(th)^2",
      "0,0": "a3*(1 + sin(th)^2*sin(ph)^2 - sin(th)^2*cos(ph)^2)/(2*cos(th)^2)"}},
    {"name": "A2", "terms": {
      "2,0": "-(sin(ph)*cos(ph))",
      "1,1": "(sin(ph)^2 - cos(ph)^2)*cos(th)/sin(th)",
      "0,2": "sin(ph)*cos(ph)*cos(th)^2/sin(th)^2",
      "0,0": "-(a3*sin(ph)*cos(ph)*sin(th)^2/cos(th)^2)"}},
    {"name": "X", "terms": {"0,1": "-1"}}
  ],
  "domain": {
    "th": {"re": [0.3, 1.2], "im": [-0.2, 0.2]},
    "ph": {"re": [0.2, 1.4], "im": [-0.2, 0.2]},
    "a3": {"re": [0.5, 1.5], "im": [-0.5, 0.5]}
  },
  "dynamics_parameters": {"a3": 1.0},
  "real_dynamics": true
}
)json"},
        {"sphere_nondegenerate", R"json({
  "name": "sphere_nondegenerate",
  "chart": "unit sphere in (th, ph): s1 = sin(th)*cos(ph), s2 = sin(th)*sin(ph), s3 = cos(th); p1 = p_th, p2 = p_ph",
  "coordinates": ["th", "ph"],
  "parameters": ["a1", "a2", "a3"],
  "metric": {"g": [["1", "0"], ["0", "1/sin(th)^2"]]},
  "potential": "a1/(sin(th)^2*cos(ph)^2) + a2/(sin(th)^2*sin(ph)^2) + a3/cos(th)^2",
  "symmetries": [
    {"name": "H", "hamiltonian": true},
    {"name": "L1", "terms": {
      "2,0": "sin(ph)^2",
      "1,1": "2*sin(ph)*cos(ph)*cos(th)/sin(th)",
      "0,2": "cos(ph)^2*cos(th)^2/sin(th)^2",
      "0,0": "a2*cos(th)^2/(sin(th)^2*sin(ph)^2) + a3*sin(th)^2*sin(ph)^2/cos(th)^2"}},
    {"name": "L2", "terms": {
      "2,0": "cos(ph)^2",
      "1,1": "-(2*sin(ph)*cos(ph)*cos(th)/sin(th))",
      "0,2": "sin(ph)^2*cos(th)^2/sin(th)^2",
      "0,0": "a3*sin(th)^2*cos(ph)^2/cos(th)^2 + a1*cos(th)^2/(sin(th)^2*cos(ph)^2)"}}
  ],
  "domain": {
    "th": {"re": [0.3, 1.2], "im": [-0.2, 0.2]},
    "ph": {"re": [0.3, 1.2], "im": [-0.2, 0.2]},
    "a1": {"re": [0.5, 1.5], "im": [-0.5, 0.5]},
    "a2": {"re": [0.5, 1.5], "im": [-0.5, 0.5]},
    "a3": {"re": [0.5, 1.5], "im": [-0.5, 0.5]}
  },
  "dynamics_parameters": {"a1": 0.3, "a2": 0.5, "a3": 0.7},
  "real_dynamics": true
}
)json"},
        {"E4", R"json({
  "name": "E4",
  "chart": "flat Cartesian coordinates, lambda = 1",
  "coordinates": ["x", "y"],
  "parameters": ["alpha"],
  "metric": {"conformal_lambda": "1"},
  "potential": "alpha*(y - i*x)",
  "symmetries": [
    {"name": "H", "hamiltonian": true},
    {"name": "X", "terms": {"0,1": "1", "1,0": "-i"}},
    {"name": "L1", "terms": {"2,0": "1", "0,0": "-(i*alpha*x)"}},
    {"name": "L2", "terms": {
      "2,0": "i*y",
      "1,1": "-(i*x) - y",
      "0,2": "x",
      "0,0": "alpha*(-(i*x^2) + 2*x*y + i*y^2)/4"}}
  ],
  "domain": {
    "x": {"re": [0.2, 1.2], "im": [-0.3, 0.3]},
    "y": {"re": [0.2, 1.2], "im": [-0.3, 0.3]},
    "alpha": {"re": [0.5, 1.5], "im": [-0.5, 0.5]}
  },
  "real_dynamics": false
}
)json"},
        {"E14", R"json({
  "name": "E14",
  "chart": "flat metric lambda = exp(y)",
  "coordinates": ["x", "y"],
  "parameters": ["alpha"],
  "metric": {"conformal_lambda": "exp(y)"},
  "potential": "alpha*exp(-(y - i*x))",
  "symmetries": [
    {"name": "H", "hamiltonian": true},
    {"name": "X", "terms": {"0,1": "exp(-(y + i*x)/2)", "1,0": "-(i*exp(-(y + i*x)/2))"}},
    {"name": "L1", "terms": {"2,0": "1", "0,0": "alpha*exp(i*x)"}},
    {"name": "L2", "terms": {
      "2,0": "i*exp(-(i*x)/2 - y/2)",
      "1,1": "-exp(-(i*x)/2 - y/2)",
      "0,0": "i*alpha*exp((i*x)/2 - y/2)"}}
  ],
  "domain": {
    "x": {"re": [0.2, 1.2], "im": [-0.3, 0.3]},
    "y": {"re": [0.2, 1.2], "im": [-0.3, 0.3]},
    "alpha": {"re": [0.5, 1.5], "im": [-0.5, 0.5]}
  },
  "real_dynamics": false
}
)json"},
        {"E13", R"json({
  "name": "E13",
  "chart": "flat metric lambda = x^2 + y^2, Re x > 0",
  "coordinates": ["x", "y"],
  "parameters": ["alpha"],
  "metric": {"conformal_lambda": "x^2 + y^2"},
  "potential": "alpha/(y - i*x)",
  "symmetries": [
    {"name": "H", "hamiltonian": true},
    {"name": "X", "terms": {"0,1": "1/(x - i*y)", "1,0": "-(i/(x - i*y))"}},
    {"name": "L1", "terms": {
      "2,0": "-(x*y)/(x^2 + y^2)",
      "1,1": "1",
      "0,2": "-(x*y)/(x^2 + y^2)",
      "0,0": "alpha*(x^2 - y^2)/(2*(x + i*y))"}},
    {"name": "L2", "terms": {
      "2,0": "-(y^2)/(x^2 + y^2)",
      "0,2": "x^2/(x^2 + y^2)",
      "0,0": "alpha*x*y/(x + i*y)"}}
  ],
  "domain": {
    "x": {"re": [0.5, 1.5], "im": [-0.3, 0.3]},
    "y": {"re": [-0.5, 0.5], "im": [-0.3, 0.3]},
    "alpha": {"re": [0.5, 1.5], "im": [-0.5, 0.5]}
  },
  "real_dynamics": false
}
)json"},
        {"darboux1_metric", R"json({
  "name": "darboux1_metric",
  "chart": "Darboux space of type 1, lambda = 4x",
  "coordinates": ["x", "y"],
  "parameters": [],
  "metric": {"conformal_lambda": "4*x"},
  "potential": "0",
  "symmetries": [
    {"name": "H", "hamiltonian": true},
    {"name": "X", "terms": {"0,1": "1"}}
  ],
  "domain": {
    "x": {"re": [0.5, 1.5], "im": [-0.3, 0.3]},
    "y": {"re": [-0.5, 0.5], "im": [-0.3, 0.3]}
  },
  "real_dynamics": true
}
)json"},
        {"flat_free", R"json({
  "name": "flat_free",
  "chart": "flat Cartesian coordinates, lambda = 1, no potential",
  "coordinates": ["x", "y"],
  "parameters": [],
  "metric": {"conformal_lambda": "1"},
  "potential": "0",
  "symmetries": [
    {"name": "P1", "terms": {"1,0": "1"}},
    {"name": "P2", "terms": {"0,1": "1"}},
    {"name": "M", "terms": {"0,1": "x", "1,0": "-y"}},
    {"name": "K1", "terms": {"2,0": "1"}},
    {"name": "K2", "terms": {"0,2": "1"}},
    {"name": "K3", "terms": {"2,0": "y^2", "1,1": "-(2*x*y)", "0,2": "x^2"}}
  ],
  "domain": {
    "x": {"re": [-1.0, 1.0], "im": [-0.5, 0.5]},
    "y": {"re": [-1.0, 1.0], "im": [-0.5, 0.5]}
  },
  "real_dynamics": true
}
)json"},
    };
    return s;
}

}  // namespace quadralg
