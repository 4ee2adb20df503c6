//! Deterministic rendering of the elicitation prompt from a model spec.

use crate::dataset::ModelSpec;

use super::ElicitError;

/// Likelihood family named in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Likelihood {
    Logistic,
    Linear,
}

impl Likelihood {
    fn model_name(self) -> &'static str {
        match self {
            Likelihood::Logistic => "logistic regression",
            Likelihood::Linear => "multiple linear regression",
        }
    }

    fn coefficient_scale(self) -> &'static str {
        match self {
            Likelihood::Logistic => "log-odds ratios",
            Likelihood::Linear => "per-unit effects on the response",
        }
    }
}

/// The structured prompt: persona, model description, the four numbered
/// requirements, and the machine-readable output contract. All fields are
/// plain template text and can be edited before rendering.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub persona: String,
    pub model_block: String,
    pub instruction_blocks: [String; 4],
    pub output_contract: String,
    pub extra_context: String,
}

impl PromptTemplate {
    /// Builds the default template for a spec and likelihood.
    pub fn new(spec: &ModelSpec, likelihood: Likelihood) -> Result<PromptTemplate, ElicitError> {
        spec.validate()
            .map_err(|e| ElicitError::BadArgument(e.to_string()))?;

        let persona = format!(
            "You are an expert statistician with deep domain knowledge of the applied \
             problem described below. For the {} model provided, your task is to propose \
             and justify suitable normally distributed prior distributions for all \
             regression parameters.",
            likelihood.model_name()
        );

        let coef_names = spec.coefficient_names();
        let mut terms = Vec::new();
        let mut beta = 0usize;
        if spec.intercept {
            terms.push(format!("beta_{beta}"));
            beta += 1;
        }
        for p in &spec.predictors {
            terms.push(format!("beta_{beta}*{}", p.name));
            beta += 1;
        }
        let response_line = match likelihood {
            Likelihood::Logistic => format!(
                "Response: {} in {{0, 1}}",
                spec.response_name
            ),
            Likelihood::Linear => format!("Response: {} (continuous)", spec.response_name),
        };
        let mut model_block = String::new();
        model_block.push_str("**Model Details:**\n");
        model_block.push_str(&response_line);
        model_block.push('\n');
        model_block.push_str(&format!("Linear Predictor: eta = {}\n", terms.join(" + ")));
        model_block.push_str("Predictor Details:\n");
        for p in &spec.predictors {
            model_block.push_str(&format!("    * {}: {} ({})\n", p.name, p.unit, p.description));
        }

        let instruction_blocks = [
            format!(
                "1. **Leverage Knowledge & Simulate Tool Use**: Briefly state how you will \
                 use your existing knowledge of the problem domain and of {} modelling \
                 (simulating the consultation of relevant literature or databases for \
                 effect sizes and typical parameter ranges) to inform your suggestions. \
                 Remember that the coefficients are {}.",
                likelihood.model_name(),
                likelihood.coefficient_scale()
            ),
            "2. **Propose Multiple Prior Sets**: Generate at least two distinct sets of \
             prior distributions (e.g., \"Suggestion A: Moderately Informative Priors \
             based on Domain Knowledge\" and \"Suggestion B: Weakly Informative / More \
             Conservative Priors\")."
                .to_string(),
            "3. **Detailed Justification for Each Parameter**: For each parameter within \
             each suggested set, provide: the specific normal prior distribution \
             N(mean, standard deviation^2), clearly stating the mean and the standard \
             deviation; the source of knowledge the values rest on; and a plausible \
             range for the parameter."
                .to_string(),
            "4. **Comparative Evaluation & Weighting**: Critically evaluate and compare \
             the different sets of priors you have proposed, and assign a relative \
             weighting or confidence score to each set, as fractions summing to 1."
                .to_string(),
        ];

        let output_contract = format!(
            "Finally, append a single machine-readable fenced ```json code block of the form\n\
             {{\"sets\": [{{\"label\": \"...\", \"source\": \"...\", \
             \"informativeness\": \"moderate\"|\"weak\", \"confidence_weight\": 0.0-1.0, \
             \"entries\": {{\"<parameter>\": {{\"mean\": number, \"sd\": number, \
             \"justification\": \"...\"}}}}}}]}}\n\
             with one entry per parameter using exactly these parameter names: {}.",
            coef_names.join(", ")
        );

        Ok(PromptTemplate {
            persona,
            model_block,
            instruction_blocks,
            output_contract,
            extra_context: String::new(),
        })
    }

    pub fn with_extra_context(mut self, extra_context: &str) -> PromptTemplate {
        self.extra_context = extra_context.to_string();
        self
    }

    /// Renders the prompt text. Pure function of the template fields.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.persona);
        out.push_str("\n\n");
        out.push_str(&self.model_block);
        out.push_str("\n**Your Response Should:**\n");
        for block in &self.instruction_blocks {
            out.push_str(block);
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&self.output_contract);
        if !self.extra_context.is_empty() {
            out.push_str("\n\nAdditional context:\n");
            out.push_str(&self.extra_context);
        }
        out.push('\n');
        out
    }
}

/// Renders the full elicitation prompt; `extra_context` is appended
/// verbatim under an "Additional context" heading when non-empty.
pub fn build_prompt(
    spec: &ModelSpec,
    likelihood: Likelihood,
    extra_context: &str,
) -> Result<String, ElicitError> {
    Ok(PromptTemplate::new(spec, likelihood)?
        .with_extra_context(extra_context)
        .render())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ModelSpec, Predictor, ResponseKind};

    fn heart_spec() -> ModelSpec {
        ModelSpec::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/specs/heart.json"
        ))
        .unwrap()
    }

    #[test]
    fn heart_prompt_contains_sex_detail_line() {
        let prompt = build_prompt(&heart_spec(), Likelihood::Logistic, "").unwrap();
        assert!(
            prompt.contains("sex: categorical (1 = male; 0 = female)"),
            "prompt missing the sex detail line:\n{prompt}"
        );
    }

    #[test]
    fn prompt_is_deterministic() {
        let spec = heart_spec();
        let a = build_prompt(&spec, Likelihood::Logistic, "note").unwrap();
        let b = build_prompt(&spec, Likelihood::Logistic, "note").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn concrete_prompt_names_all_components() {
        let spec = ModelSpec::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/specs/concrete.json"
        ))
        .unwrap();
        let prompt = build_prompt(&spec, Likelihood::Linear, "").unwrap();
        for name in [
            "Cement",
            "Blast Furnace Slag",
            "Fly Ash",
            "Water",
            "Superplasticizer",
            "Coarse Aggregate",
            "Fine Aggregate",
            "Age",
        ] {
            assert!(prompt.contains(name), "prompt missing {name}");
        }
    }

    #[test]
    fn every_predictor_appears_once_in_details_with_unit() {
        let spec = heart_spec();
        let prompt = build_prompt(&spec, Likelihood::Logistic, "").unwrap();
        for p in &spec.predictors {
            let marker = format!("    * {}: ", p.name);
            let count = prompt.matches(&marker).count();
            assert_eq!(count, 1, "predictor {} appears {count} times", p.name);
            let line = prompt
                .lines()
                .find(|l| l.starts_with(&marker))
                .expect("detail line exists");
            assert!(line.contains(&p.unit), "line `{line}` missing unit {}", p.unit);
        }
    }

    #[test]
    fn extra_context_is_appended_verbatim() {
        let spec = heart_spec();
        let note = "the time span for the age variable was from one to 365 days";
        let prompt = build_prompt(&spec, Likelihood::Logistic, note).unwrap();
        assert!(prompt.contains(note));
    }

    #[test]
    fn empty_predictor_list_rejected() {
        let spec = ModelSpec {
            response_name: "y".into(),
            response_kind: ResponseKind::Binary,
            predictors: Vec::<Predictor>::new(),
            intercept: true,
            binarize: None,
        };
        assert!(matches!(
            build_prompt(&spec, Likelihood::Logistic, ""),
            Err(ElicitError::BadArgument(_))
        ));
    }

    #[test]
    fn asks_for_at_least_two_sets_and_json_block() {
        let prompt = build_prompt(&heart_spec(), Likelihood::Logistic, "").unwrap();
        assert!(prompt.contains("at least two distinct sets"));
        assert!(prompt.contains("```json"));
        assert!(prompt.contains("intercept, age, sex, trestbps, chol, thalach, oldpeak"));
    }
}
