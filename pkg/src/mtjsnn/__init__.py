"""MTJ-neuron probabilistic spiking network co-simulation."""
