pub mod ap_oracle;
pub mod datasets;
pub mod monte_carlo;
