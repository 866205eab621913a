"""Probabilistic lava-flow invasion and topographic-change forecasting on a DEM."""
from .event_model import (AliasTable, EventClass, EventRealization, EventTable,
                          RealizationMode, default_event_table, load_event_table,
                          realize_event, sample_event, sample_poisson)
from .hazard import (HazardResult, ScenarioConfig, exhaustive_hazard, fit_cubic,
                     relative_scale, run_once, run_scenario)
from .lava_ca import CaParams, FlowResult, outflows, simulate_flow
from .raster import Grid, cell_center, read_ascii_grid, write_ascii_grid
from .render import Image, Palette, render_absolute, render_log_relative, write_ppm
from .vent_field import (ClassMap, VentRecord, VentSet, classify_density, estimate_pdf,
                         generate_vent_grid, sample_vent)

__version__ = "0.1.0"
