import json
import os

DEFAULTS = {"host": "localhost", "port": 8080, "debug": False, "workers": 2}


class ConfigError(Exception):
    pass


def load_config(path=None, env=None):
    env = os.environ if env is None else env
    config = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as handle:
                config.update(json.load(handle))
        except FileNotFoundError:
            raise ConfigError("missing config file: %s" % path)
    for key in DEFAULTS:
        name = "APP_" + key.upper()
        if name in env:
            config[key] = coerce(env[name], type(DEFAULTS[key]))
    validate(config)
    return config


def coerce(value, kind):
    if kind is bool:
        return value.lower() in ("1", "true", "yes")
    return kind(value)


def validate(config):
    if not 0 < config["port"] < 65536:
        raise ConfigError("port out of range")
    if config["workers"] < 1:
        raise ConfigError("need at least one worker")


print(load_config(env={"APP_PORT": "9000", "APP_DEBUG": "yes"}))
