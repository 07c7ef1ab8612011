try:
    from tomllib import loads as toml_loads
except ModuleNotFoundError:  # Python < 3.11
    from tomli import loads as toml_loads

__all__ = ["toml_loads"]
