#include "oraac/param_io.hpp"

namespace oraac {

nlohmann::json encode_vector(const Vector& v)
{
    nlohmann::json arr = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i)
        arr.push_back(v(i));
    return arr;
}

Vector decode_vector(const nlohmann::json& doc)
{
    if (!doc.is_array())
        throw FormatError("expected a numeric array");
    Vector v(static_cast<Index>(doc.size()));
    for (std::size_t i = 0; i < doc.size(); ++i) {
        if (!doc[i].is_number())
            throw FormatError("non-numeric entry in array at position " + std::to_string(i));
        v(static_cast<Index>(i)) = doc[i].get<double>();
    }
    return v;
}

nlohmann::json encode_params(const ParamSet<double>& params)
{
    nlohmann::json nets = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& layer : params.net(i).layers()) {
            const Vector w = Eigen::Map<const Vector>(layer.weight.data(), layer.weight.size());
            layers.push_back({{"rows", layer.weight.rows()},
                              {"cols", layer.weight.cols()},
                              {"activation", to_string(layer.activation)},
                              {"weight", encode_vector(w)},
                              {"bias", encode_vector(layer.bias)}});
        }
        nets.push_back({{"name", params.names()[i]}, {"layers", layers}});
    }
    return nets;
}

ParamSet<double> decode_params(const nlohmann::json& doc)
{
    if (!doc.is_array())
        throw FormatError("parameter set must be an array of networks");
    ParamSet<double> params;
    for (const auto& net : doc) {
        std::vector<Dense<double>> layers;
        for (const auto& l : net.at("layers")) {
            Dense<double> layer;
            const Index rows = l.at("rows").get<Index>();
            const Index cols = l.at("cols").get<Index>();
            const Vector w = decode_vector(l.at("weight"));
            if (w.size() != rows * cols)
                throw FormatError("weight of network '" + net.at("name").get<std::string>() +
                                  "' has the wrong number of entries");
            layer.weight = Eigen::Map<const Matrix>(w.data(), rows, cols);
            layer.bias = decode_vector(l.at("bias"));
            layer.activation = activation_from_string(l.at("activation").get<std::string>());
            layers.push_back(std::move(layer));
        }
        try {
            params.add(net.at("name").get<std::string>(), Mlp<double>(std::move(layers)));
        } catch (const ConfigError& e) {
            throw FormatError(e.what());
        }
    }
    return params;
}

nlohmann::json encode_adam(const AdamState<double>& state)
{
    return {{"learning_rate", state.hyper.learning_rate},
            {"beta1", state.hyper.beta1},
            {"beta2", state.hyper.beta2},
            {"epsilon", state.hyper.epsilon},
            {"step", state.step},
            {"first_moment", encode_vector(state.first_moment)},
            {"second_moment", encode_vector(state.second_moment)}};
}

AdamState<double> decode_adam(const nlohmann::json& doc)
{
    AdamState<double> state;
    state.hyper.learning_rate = doc.at("learning_rate").get<double>();
    state.hyper.beta1 = doc.at("beta1").get<double>();
    state.hyper.beta2 = doc.at("beta2").get<double>();
    state.hyper.epsilon = doc.at("epsilon").get<double>();
    state.step = doc.at("step").get<long>();
    state.first_moment = decode_vector(doc.at("first_moment"));
    state.second_moment = decode_vector(doc.at("second_moment"));
    if (state.first_moment.size() != state.second_moment.size())
        throw FormatError("optimizer moments have different lengths");
    return state;
}

}  // namespace oraac
