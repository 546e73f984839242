# sttsim
# Trace-driven simulator for a reduced-retention STTRAM L1 data cache.
# Modules can be referenced as: from sttsim.cache import RetentionCache
