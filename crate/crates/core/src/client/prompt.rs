use super::Label;

pub const NEUROLOGIST_INSTRUCTION: &str = "You are a neurologist evaluating this EEG ICA component.";

/// Default instruction text for a batch of `n_images` dashboards. A custom
/// template replaces it entirely; `{n_images}` in a template is substituted.
pub fn build_prompt(template: Option<&str>, n_images: usize) -> String {
    if let Some(t) = template {
        return t.replace("{n_images}", &n_images.to_string());
    }
    let labels: Vec<&str> = Label::ALL.iter().map(|l| l.as_str()).collect();
    format!(
        "{NEUROLOGIST_INSTRUCTION}\n\
         Each attached image is a diagnostic dashboard for one independent component: \
         scalp topography (top left), activation time series over 2.5 s (top right), \
         ERP image of consecutive 1 s epochs (bottom left) and power spectrum in dB over 1-80 Hz (bottom right).\n\
         There are {n_images} images. Classify each one into exactly one of these labels: {}.\n\
         Reply with JSON only: an array with one object per image, in the order the images were given, \
         each of the form {{\"label\": string, \"confidence\": number between 0 and 1, \"reason\": string}}. \
         The reason should be a short paragraph of 30 to 70 words citing the visual evidence.",
        labels.join(", ")
    )
}
