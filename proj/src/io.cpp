#include "gkt/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace gkt {

namespace {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

void write_raw(std::ofstream& os, const void* p, std::size_t bytes) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
  if (!os) throw IoError("write failure");
}

void read_raw(std::ifstream& is, void* p, std::size_t bytes) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
  if (!is) throw IoError("read failure (truncated file?)");
}

void write_u32(std::ofstream& os, std::uint32_t v) { write_raw(os, &v, sizeof v); }
void write_u64(std::ofstream& os, std::uint64_t v) { write_raw(os, &v, sizeof v); }
std::uint32_t read_u32(std::ifstream& is) { std::uint32_t v; read_raw(is, &v, sizeof v); return v; }
std::uint64_t read_u64(std::ifstream& is) { std::uint64_t v; read_raw(is, &v, sizeof v); return v; }

void write_tensor_data(std::ofstream& os, const Tensor& t) {
  write_raw(os, t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
}

void read_tensor_data(std::ifstream& is, Tensor& t) {
  read_raw(is, t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
}

nlohmann::json grid_to_json(const Grid& g) {
  return nlohmann::json{{"m", g.m},
                        {"n", g.n},
                        {"boundary", g.boundary == Boundary::periodic  ? "periodic"
                                     : g.boundary == Boundary::dirichlet ? "dirichlet"
                                                                         : "neumann"}};
}

Grid grid_from_json(const nlohmann::json& j) {
  Grid g;
  g.m = j.at("m").get<int>();
  g.n = j.at("n").get<std::int64_t>();
  const std::string b = j.at("boundary").get<std::string>();
  g.boundary = b == "periodic"    ? Boundary::periodic
               : b == "dirichlet" ? Boundary::dirichlet
                                  : Boundary::neumann;
  return g;
}

std::vector<std::int64_t> sample_shape(const Grid& g) {
  return g.m == 1 ? std::vector<std::int64_t>{g.n} : std::vector<std::int64_t>{g.n, g.n};
}

}  // namespace

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

nlohmann::json to_json(const DatasetConfig& c) {
  return nlohmann::json{{"problem", to_string(c.problem)},
                        {"count_train", c.count_train},
                        {"count_test", c.count_test},
                        {"seed", c.seed},
                        {"burgers_n", c.burgers_n},
                        {"burgers_fine_n", c.burgers_fine_n},
                        {"burgers_nu", c.burgers_nu},
                        {"burgers_dt", c.burgers_dt},
                        {"burgers_t_end", c.burgers_t_end},
                        {"darcy_fine_n", c.darcy_fine_n},
                        {"darcy_nf", c.darcy_nf},
                        {"darcy_nc", c.darcy_nc},
                        {"noise_eps", c.noise_eps}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.problem = problem_from_string(j.at("problem").get<std::string>());
  c.count_train = j.at("count_train").get<std::int64_t>();
  c.count_test = j.at("count_test").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.burgers_n = j.at("burgers_n").get<std::int64_t>();
  c.burgers_fine_n = j.at("burgers_fine_n").get<std::int64_t>();
  c.burgers_nu = j.at("burgers_nu").get<double>();
  c.burgers_dt = j.at("burgers_dt").get<double>();
  c.burgers_t_end = j.at("burgers_t_end").get<double>();
  c.darcy_fine_n = j.at("darcy_fine_n").get<std::int64_t>();
  c.darcy_nf = j.at("darcy_nf").get<std::int64_t>();
  c.darcy_nc = j.at("darcy_nc").get<std::int64_t>();
  c.noise_eps = j.at("noise_eps").get<double>();
  return c;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const Grid gin = ds.train.empty() ? (ds.test.empty() ? Grid{} : ds.test.front().input_grid)
                                    : ds.train.front().input_grid;
  const Grid gout = ds.train.empty() ? (ds.test.empty() ? Grid{} : ds.test.front().target_grid)
                                     : ds.train.front().target_grid;
  nlohmann::json header = {{"config", to_json(ds.config)},
                           {"input_grid", grid_to_json(gin)},
                           {"target_grid", grid_to_json(gout)},
                           {"noise_std_len", ds.noise_std.numel()}};
  const std::string htext = header.dump();
  os.write("GKTD", 4);
  write_u32(os, 1);
  write_u64(os, htext.size());
  write_raw(os, htext.data(), htext.size());
  for (const auto* split : {&ds.train, &ds.test})
    for (const DataSample& s : *split) {
      write_tensor_data(os, s.input);
      write_tensor_data(os, s.target);
    }
  if (ds.noise_std.numel() > 0) write_tensor_data(os, ds.noise_std);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  read_raw(is, magic, 4);
  if (std::memcmp(magic, "GKTD", 4) != 0) throw IoError("not a GKTD dataset file");
  const std::uint32_t version = read_u32(is);
  if (version != 1) throw IoError("unsupported GKTD version");
  const std::uint64_t hlen = read_u64(is);
  std::string htext(hlen, '\0');
  read_raw(is, htext.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(htext);

  Dataset ds;
  ds.config = dataset_config_from_json(header.at("config"));
  const Grid gin = grid_from_json(header.at("input_grid"));
  const Grid gout = grid_from_json(header.at("target_grid"));
  const std::int64_t noise_len = header.at("noise_std_len").get<std::int64_t>();

  auto read_split = [&](std::vector<DataSample>& split, std::int64_t count) {
    split.resize(static_cast<std::size_t>(count));
    for (DataSample& s : split) {
      s.input = Tensor(sample_shape(gin));
      s.target = Tensor(sample_shape(gout));
      s.input_grid = gin;
      s.target_grid = gout;
      read_tensor_data(is, s.input);
      read_tensor_data(is, s.target);
    }
  };
  read_split(ds.train, ds.config.count_train);
  read_split(ds.test, ds.config.count_test);
  if (noise_len > 0) {
    ds.noise_std = Tensor({noise_len});
    read_tensor_data(is, ds.noise_std);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"problem", to_string(c.problem)},
                        {"variant", to_string(c.variant)},
                        {"ln_scheme", to_string(c.ln_scheme)},
                        {"n_layers", c.n_layers},
                        {"d_model", c.d_model},
                        {"n_head", c.n_head},
                        {"decoder", to_string(c.decoder)},
                        {"n_modes", c.n_modes},
                        {"d_decoder", c.d_decoder},
                        {"activation", c.activation == Activation::silu ? "silu" : "relu"},
                        {"seq_n", c.seq_n},
                        {"n_f", c.n_f},
                        {"n_c", c.n_c},
                        {"extractor_hidden", c.extractor_hidden},
                        {"init_eta", c.init_eta},
                        {"init_delta", c.init_delta},
                        {"dropout_attn", c.dropout_attn},
                        {"dropout_ffn", c.dropout_ffn},
                        {"ln_eps", c.ln_eps},
                        {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.problem = problem_from_string(j.at("problem").get<std::string>());
  c.variant = attn_variant_from_string(j.at("variant").get<std::string>());
  c.ln_scheme = ln_scheme_from_string(j.at("ln_scheme").get<std::string>());
  c.n_layers = j.at("n_layers").get<std::int64_t>();
  c.d_model = j.at("d_model").get<std::int64_t>();
  c.n_head = j.at("n_head").get<std::int64_t>();
  c.decoder = decoder_from_string(j.at("decoder").get<std::string>());
  c.n_modes = j.at("n_modes").get<std::int64_t>();
  c.d_decoder = j.at("d_decoder").get<std::int64_t>();
  c.activation = j.at("activation").get<std::string>() == "relu" ? Activation::relu
                                                                 : Activation::silu;
  c.seq_n = j.at("seq_n").get<std::int64_t>();
  c.n_f = j.at("n_f").get<std::int64_t>();
  c.n_c = j.at("n_c").get<std::int64_t>();
  c.extractor_hidden = j.at("extractor_hidden").get<std::int64_t>();
  c.init_eta = j.at("init_eta").get<double>();
  c.init_delta = j.at("init_delta").get<double>();
  c.dropout_attn = j.at("dropout_attn").get<double>();
  c.dropout_ffn = j.at("dropout_ffn").get<double>();
  c.ln_eps = j.at("ln_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

void write_named_tensor(std::ofstream& os, const std::string& name, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  write_raw(os, name.data(), name.size());
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::int64_t i = 0; i < t.rank(); ++i)
    write_u64(os, static_cast<std::uint64_t>(t.dim(i)));
  write_tensor_data(os, t);
}

std::pair<std::string, Tensor> read_named_tensor(std::ifstream& is) {
  const std::uint32_t nlen = read_u32(is);
  std::string name(nlen, '\0');
  read_raw(is, name.data(), nlen);
  const std::uint32_t rank = read_u32(is);
  std::vector<std::int64_t> shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<std::int64_t>(read_u64(is));
  Tensor t(shape);
  read_tensor_data(is, t);
  return {std::move(name), std::move(t)};
}

}  // namespace

void write_checkpoint(const std::string& path, const OperatorModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  nlohmann::json header = {{"config", to_json(model.config())},
                           {"input_norm_fitted", model.input_normalizer().fitted},
                           {"target_norm_fitted", model.target_normalizer().fitted}};
  const std::string htext = header.dump();
  os.write("GKTM", 4);
  write_u32(os, 1);
  write_u64(os, htext.size());
  write_raw(os, htext.data(), htext.size());

  const ParamStore& params = model.params();
  std::uint32_t blob_count = static_cast<std::uint32_t>(params.size());
  if (model.input_normalizer().fitted) blob_count += 2;
  if (model.target_normalizer().fitted) blob_count += 2;
  write_u32(os, blob_count);
  for (std::int64_t i = 0; i < params.size(); ++i)
    write_named_tensor(os, params.name(i), params.value(i));
  if (model.input_normalizer().fitted) {
    write_named_tensor(os, "__norm.input.mean", model.input_normalizer().mean);
    write_named_tensor(os, "__norm.input.std", model.input_normalizer().std);
  }
  if (model.target_normalizer().fitted) {
    write_named_tensor(os, "__norm.target.mean", model.target_normalizer().mean);
    write_named_tensor(os, "__norm.target.std", model.target_normalizer().std);
  }
}

OperatorModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  read_raw(is, magic, 4);
  if (std::memcmp(magic, "GKTM", 4) != 0) throw IoError("not a GKTM checkpoint file");
  const std::uint32_t version = read_u32(is);
  if (version != 1) throw IoError("unsupported GKTM version");
  const std::uint64_t hlen = read_u64(is);
  std::string htext(hlen, '\0');
  read_raw(is, htext.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(htext);

  OperatorModel model(model_config_from_json(header.at("config")));
  const std::uint32_t blob_count = read_u32(is);
  for (std::uint32_t b = 0; b < blob_count; ++b) {
    auto [name, tensor] = read_named_tensor(is);
    if (name == "__norm.input.mean") {
      model.input_normalizer().mean = std::move(tensor);
    } else if (name == "__norm.input.std") {
      model.input_normalizer().std = std::move(tensor);
      model.input_normalizer().fitted = true;
    } else if (name == "__norm.target.mean") {
      model.target_normalizer().mean = std::move(tensor);
    } else if (name == "__norm.target.std") {
      model.target_normalizer().std = std::move(tensor);
      model.target_normalizer().fitted = true;
    } else {
      bool found = false;
      for (std::int64_t i = 0; i < model.params().size(); ++i) {
        if (model.params().name(i) == name) {
          if (!model.params().value(i).same_shape(tensor))
            throw IoError("checkpoint shape mismatch for " + name);
          model.params().value(i) = std::move(tensor);
          found = true;
          break;
        }
      }
      if (!found) throw IoError("unknown parameter in checkpoint: " + name);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// hashing / misc
// ---------------------------------------------------------------------------

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    const std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string content_hash_hex(const std::string& path) {
  std::ostringstream os;
  os << std::hex << fnv1a_file(path);
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"lr_max", c.lr_max},
                        {"warmup_frac", c.warmup_frac},
                        {"start_end_factor", c.start_end_factor},
                        {"clip_norm", c.clip_norm},
                        {"gamma", c.gamma},
                        {"seed", c.seed}};
}

nlohmann::json to_json(const RunReport& r, bool include_timing) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : r.epochs) {
    nlohmann::json je = {{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"eval_rel_l2", e.eval_rel_l2},
                         {"lr", e.lr_last}};
    if (include_timing) je["wall_seconds"] = e.wall_seconds;
    epochs.push_back(std::move(je));
  }
  nlohmann::json j = {{"config", to_json(r.config)},
                      {"lr_shape", r.lr_shape},
                      {"epochs", std::move(epochs)},
                      {"best_eval", r.best_eval},
                      {"best_epoch", r.best_epoch},
                      {"aborted_nan", r.aborted_nan},
                      {"abort_epoch", r.abort_epoch},
                      {"dot_macs_per_layer", r.dot_macs_per_layer}};
  if (include_timing) {
    j["timing"] = {{"total_wall_seconds", r.total_wall_seconds},
                   {"peak_tape_bytes", r.peak_tape_bytes}};
  }
  return j;
}

std::string run_report_csv(const RunReport& r) {
  std::ostringstream os;
  os << "epoch,loss,eval_rel_l2,lr\n";
  os.precision(17);
  for (const EpochRecord& e : r.epochs)
    os << e.epoch << "," << e.train_loss << "," << e.eval_rel_l2 << "," << e.lr_last << "\n";
  return os.str();
}

}  // namespace gkt
