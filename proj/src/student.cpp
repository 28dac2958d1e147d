#include "ptd/student.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ptd/params.hpp"

namespace ptd {

long long LayerCensus::total_nonzero() const {
  return std::accumulate(layers.begin(), layers.end(), 0LL,
                         [](long long acc, const CensusEntry& e) { return acc + e.nonzero; });
}

namespace {

LayerCensus census_skeleton(const ArchitectureSpec& arch) {
  validate(arch);
  LayerCensus out;
  for (const auto& info : param_layout(arch)) {
    if (!info.prunable()) continue;
    CensusEntry e;
    e.label = info.label;
    e.param = info.name;
    e.out_ch = info.shape[0];
    e.in_ch = info.shape[1];
    if (info.shape.size() == 4) {
      e.kernel_area = static_cast<long long>(info.shape[2]) * info.shape[3];
      e.kind = info.label.rfind("proj-", 0) == 0 ? CensusKind::Projection : CensusKind::Conv;
    } else {
      e.kind = info.label == "fc" ? CensusKind::Classifier : CensusKind::HiddenDense;
    }
    e.capacity = static_cast<long long>(shape_size(info.shape));
    out.layers.push_back(std::move(e));
  }
  return out;
}

}  // namespace

template <class T>
LayerCensus census(const MaskedCheckpoint<T>& ckpt) {
  if (!ckpt.has_masks()) throw ConfigError("checkpoint has no masks; census needs a masked checkpoint");
  LayerCensus out = census_skeleton(ckpt.arch);
  for (auto& e : out.layers) {
    const LayerMask* m = ckpt.masks.find(e.param);
    if (!m) throw ConfigError("checkpoint has no mask for " + e.param);
    e.nonzero = static_cast<long long>(m->kept());
  }
  return out;
}

template LayerCensus census<float>(const MaskedCheckpoint<float>&);
template LayerCensus census<double>(const MaskedCheckpoint<double>&);

LayerCensus census_from_counts(const ArchitectureSpec& arch, const std::vector<long long>& nonzero) {
  LayerCensus out = census_skeleton(arch);
  if (nonzero.size() != out.layers.size()) {
    throw ConfigError("census has " + std::to_string(nonzero.size()) + " counts for " +
                      std::to_string(out.layers.size()) + " prunable layers");
  }
  for (std::size_t i = 0; i < nonzero.size(); ++i) {
    if (nonzero[i] < 0 || nonzero[i] > out.layers[i].capacity) {
      throw ConfigError("census count for " + out.layers[i].label + " outside [0, capacity]");
    }
    out.layers[i].nonzero = nonzero[i];
  }
  return out;
}

std::vector<LayerCount> ModelCount::weight_layers() const {
  std::vector<LayerCount> out;
  std::copy_if(layers.begin(), layers.end(), std::back_inserter(out), [](const LayerCount& l) {
    return l.kind == "conv" || l.kind == "proj" || l.kind == "dense" || l.kind == "fc";
  });
  return out;
}

namespace {

struct Counter {
  ModelCount out;
  int conv = 0, proj = 0, bn = 0, dense = 0, other = 0;
  const LayerSpec* classifier = nullptr;

  void add(LayerCount row) {
    out.total_weights += row.weights;
    out.total_biases += row.biases;
    out.total_bn += row.bn_params;
    out.total_macs += row.macs;
    out.total_aux_ops += row.aux_ops;
    out.layers.push_back(std::move(row));
  }

  void conv_row(const Conv2d& c, const Shape& in, const std::string& label, const std::string& kind) {
    const Shape o = layer_output_shape(LayerSpec{c}, in);
    const long long weights = static_cast<long long>(c.kh) * c.kw * c.in_ch * c.out_ch;
    add({label, kind, weights, c.has_bias ? c.out_ch : 0, 0, weights * o[1] * o[2], 0});
  }

  Shape chain(const std::vector<LayerSpec>& layers, Shape shape) {
    for (const auto& layer : layers) {
      const Shape next = layer_output_shape(layer, shape);
      const long long elems = static_cast<long long>(shape_size(next));
      if (const auto* c = std::get_if<Conv2d>(&layer.kind)) {
        conv_row(*c, shape, "conv-" + std::to_string(conv++), "conv");
      } else if (const auto* d = std::get_if<Dense>(&layer.kind)) {
        const bool fc = &layer == classifier;
        const long long w = static_cast<long long>(d->in) * d->out;
        add({fc ? "fc" : "dense-" + std::to_string(dense++), fc ? "fc" : "dense", w, d->has_bias ? d->out : 0, 0, w, 0});
      } else if (const auto* b = std::get_if<BatchNorm>(&layer.kind)) {
        add({"bn-" + std::to_string(bn++), "bn", 0, 0, 2LL * b->channels, 0, elems});
      } else if (layer.is<ReLU>()) {
        add({"relu-" + std::to_string(other++), "relu", 0, 0, 0, 0, elems});
      } else if (const auto* p = std::get_if<MaxPool>(&layer.kind)) {
        add({"maxpool-" + std::to_string(other++), "maxpool", 0, 0, 0, 0, elems * p->k * p->k});
      } else if (const auto* r = std::get_if<ResidualBlock>(&layer.kind)) {
        chain(r->body, shape);
        if (r->projection) conv_row(*r->projection, shape, "proj-" + std::to_string(proj++), "proj");
        add({"add-" + std::to_string(other++), "add", 0, 0, 0, 0, elems});
      }
      shape = next;
    }
    return shape;
  }
};

}  // namespace

ModelCount count_macs(const ArchitectureSpec& arch, const Shape& input) {
  ArchitectureSpec a = arch;
  a.input = input;
  validate(a);
  Counter c;
  c.classifier = find_classifier(a);
  c.chain(a.layers, a.input);
  return std::move(c.out);
}

ModelCount count_macs(const ArchitectureSpec& arch) { return count_macs(arch, arch.input); }

ModelCount count_params(const ArchitectureSpec& arch) { return count_macs(arch, arch.input); }

// ---------------------------------------------------------------------------

namespace {

struct Solver {
  const LayerCensus& census;
  std::size_t cursor = 0;
  std::vector<int> channels;

  const CensusEntry& next(CensusKind kind) {
    while (cursor < census.layers.size() && census.layers[cursor].kind == CensusKind::Projection) ++cursor;
    if (cursor >= census.layers.size() || census.layers[cursor].kind != kind) {
      throw ConfigError("census does not align with the teacher architecture");
    }
    return census.layers[cursor++];
  }

  static int solve(long long nonzero, long long area, int prev) {
    const double exact = static_cast<double>(nonzero) / (static_cast<double>(area) * prev);
    return static_cast<int>(std::max<long long>(1, round_half_away(exact)));
  }

  // Returns the new per-sample output shape of the chain given the student's input shape.
  Shape chain(std::vector<LayerSpec>& layers, Shape shape, const LayerSpec* classifier) {
    for (auto& layer : layers) {
      if (auto* c = std::get_if<Conv2d>(&layer.kind)) {
        const auto& e = next(CensusKind::Conv);
        if (e.kernel_area != static_cast<long long>(c->kh) * c->kw) throw ConfigError("census kernel area mismatch");
        c->in_ch = shape[0];
        c->out_ch = solve(e.nonzero, e.kernel_area, shape[0]);
        channels.push_back(c->out_ch);
      } else if (auto* d = std::get_if<Dense>(&layer.kind)) {
        d->in = shape[0];
        if (&layer == classifier) {
          next(CensusKind::Classifier);
        } else {
          const auto& e = next(CensusKind::HiddenDense);
          d->out = solve(e.nonzero, 1, shape[0]);
          channels.push_back(d->out);
        }
      } else if (auto* b = std::get_if<BatchNorm>(&layer.kind)) {
        b->channels = shape[0];
      } else if (auto* r = std::get_if<ResidualBlock>(&layer.kind)) {
        const Shape out = chain(r->body, shape, nullptr);
        // One width per block: the shortcut follows the body's last conv.
        if (r->projection || out != shape) {
          Conv2d proj = r->projection.value_or(Conv2d{shape[0], out[0], 1, 1, 1, 0, false});
          proj.in_ch = shape[0];
          proj.out_ch = out[0];
          if (!r->projection) proj.stride = std::max(1, shape[1] / std::max(1, out[1]));
          r->projection = proj;
        }
      }
      shape = layer_output_shape(layer, shape);
    }
    return shape;
  }
};

}  // namespace

StudentPlan solve_student_channels(const ArchitectureSpec& teacher, const LayerCensus& census) {
  validate(teacher);
  StudentPlan plan;
  plan.arch = teacher;
  if (!plan.arch.name.empty()) plan.arch.name += "-student";
  Solver solver{census};
  solver.channels.push_back(teacher.input[0]);
  solver.chain(plan.arch.layers, plan.arch.input, &plan.arch.layers[classifier_index(plan.arch)]);
  while (solver.cursor < census.layers.size() && census.layers[solver.cursor].kind == CensusKind::Projection) {
    ++solver.cursor;
  }
  if (solver.cursor != census.layers.size()) throw ConfigError("census has more layers than the architecture");
  validate(plan.arch);
  plan.channels = std::move(solver.channels);

  const ModelCount counts = count_params(plan.arch);
  const auto rows = counts.weight_layers();
  std::vector<CensusEntry> teacher_rows = census.layers;
  for (const auto& row : rows) {
    StudentPlanRow r;
    r.label = row.label;
    r.student_params = row.weights;
    for (const auto& e : teacher_rows) {
      if (e.label == row.label) {
        r.kernel_area = e.kernel_area;
        r.nonzero = e.nonzero;
        r.teacher_capacity = e.capacity;
      }
    }
    plan.rows.push_back(r);
  }
  const auto layout = param_layout(plan.arch);
  std::size_t row = 0;
  for (const auto& info : layout) {
    if (!info.prunable()) continue;
    plan.rows.at(row++).channels = info.shape[0];
  }
  plan.total_weights = counts.total_weights;
  return plan;
}

}  // namespace ptd
