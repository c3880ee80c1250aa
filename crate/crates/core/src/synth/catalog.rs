//! Plausible adult ICU ranges used by the generator.

/// Patient-level mean drawn from `N(mean, between_sd)`, readings scattered
/// around it with `within_sd`, clipped and rounded.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VariableModel {
    pub mean: f64,
    pub between_sd: f64,
    pub within_sd: f64,
    pub lo: f64,
    pub hi: f64,
    pub decimals: i32,
    pub readings: (u32, u32),
}

const fn vm(
    mean: f64,
    between_sd: f64,
    within_sd: f64,
    lo: f64,
    hi: f64,
    decimals: i32,
    readings: (u32, u32),
) -> VariableModel {
    VariableModel {
        mean,
        between_sd,
        within_sd,
        lo,
        hi,
        decimals,
        readings,
    }
}

pub(crate) fn variable_model(variable_id: &str) -> VariableModel {
    match variable_id {
        "heart_rate" => vm(85.0, 15.0, 8.0, 30.0, 200.0, 0, (6, 24)),
        "sbp" => vm(120.0, 18.0, 10.0, 60.0, 220.0, 0, (6, 24)),
        "dbp" => vm(65.0, 10.0, 7.0, 30.0, 130.0, 0, (6, 24)),
        "spo2" => vm(96.0, 2.0, 1.5, 70.0, 100.0, 0, (6, 24)),
        "etco2" => vm(38.0, 5.0, 3.0, 15.0, 70.0, 0, (2, 12)),
        "resp_rate" => vm(18.0, 4.0, 3.0, 6.0, 45.0, 0, (6, 24)),
        "temperature" => vm(37.0, 0.5, 0.3, 34.0, 41.0, 1, (3, 8)),
        "tidal_volume" => vm(450.0, 60.0, 40.0, 200.0, 900.0, 0, (2, 8)),
        "peep" => vm(6.0, 2.0, 1.0, 0.0, 20.0, 0, (2, 8)),
        "creatinine" => vm(1.1, 0.5, 0.15, 0.3, 12.0, 1, (1, 3)),
        "lactic_acid" => vm(1.8, 0.9, 0.4, 0.3, 15.0, 1, (1, 4)),
        "crp" => vm(50.0, 40.0, 10.0, 0.5, 400.0, 0, (1, 2)),
        "anion_gap" => vm(12.0, 3.0, 1.5, 3.0, 35.0, 0, (1, 3)),
        "bnp" => vm(300.0, 250.0, 50.0, 5.0, 5000.0, 0, (1, 2)),
        "urine_sg" => vm(1.018, 0.007, 0.003, 1.001, 1.040, 3, (1, 2)),
        "hemoglobin" => vm(11.0, 2.0, 0.5, 5.0, 18.0, 1, (1, 3)),
        "glucose" => vm(130.0, 30.0, 25.0, 40.0, 500.0, 0, (2, 6)),
        "sodium" => vm(139.0, 4.0, 2.0, 120.0, 160.0, 0, (1, 3)),
        "calcium" => vm(8.7, 0.6, 0.3, 6.0, 12.0, 1, (1, 3)),
        "magnesium" => vm(2.0, 0.3, 0.15, 1.0, 4.0, 1, (1, 3)),
        _ => vm(50.0, 10.0, 5.0, 0.0, 1000.0, 1, (1, 4)),
    }
}

/// Drug administered with probability `p_given` as 1..=`max_doses`
/// doses, each a whole multiple (1..=3) of `bolus`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DrugModel {
    pub unit: &'static str,
    pub p_given: f64,
    pub bolus: f64,
    pub max_doses: u32,
}

pub(crate) fn drug_model(drug_id: &str) -> DrugModel {
    let (unit, p_given, bolus, max_doses) = match drug_id {
        "propofol" => ("mg", 0.3, 50.0, 8),
        "fentanyl" => ("mcg", 0.4, 25.0, 8),
        "midazolam" => ("mg", 0.15, 2.0, 6),
        "dexmedetomidine" => ("mcg", 0.1, 20.0, 6),
        _ => ("mg", 0.2, 10.0, 4),
    };
    DrugModel {
        unit,
        p_given,
        bolus,
        max_doses,
    }
}

pub(crate) const COMORBIDITY_RATES: [f64; 7] = [0.15, 0.12, 0.08, 0.12, 0.01, 0.10, 0.06];
