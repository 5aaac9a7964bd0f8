//! Prompt templates. Placeholders are written `{name}` and filled by
//! [`fill`]. `{img_url}` marks where an image is attached.

pub const EVALUATION: &str = "Here is the conversation history:{history_context}
The correct answer (Ground Truth) is: {Ans}.

Please examine the provided image carefully {img_url}, and judge whether this historical context and current image provide sufficient, clear, and unambiguous evidence to directly derive the answer? Strictly follow the output format:

 - Do NOT explain or generate any thinking process.

 - Answer immediately with exactly one word: 'Yes' or 'No'.

 Your Answer:
";

pub const JIGSAW_THOUGHT: &str = "You are an expert visual puzzle solver working on restoring a {grid_n}*{grid_n} shuffled image.

 - Current State: {state_curr}

 - Next State: {state_next}

 - Your Task: Analyze the visual changes to determine if the proposed move improves the image integrity. Please provide a cohesive reasoning paragraph covering the following points naturally:(1) Global Context: Briefly mention the image size and the current tile arrangement {state_curr}. (2)Visual Defects: Identify what looks wrong in the current input (e.g., disconnected lines, fragmented objects, misaligned borders).(3) Restoration Logic: Explain how the proposed rearrangement fixes these specific visual discontinuities. (4)Verification: Conclude which specific region or object is now correctly formed.

Finally, output the target index list clearly as: Target State: {state_next}
";

pub const MAZE_THOUGHT: &str = "You are an expert in maze path planning. Based on the provided maze information, please thoroughly analyze the current path choices and deduce the optimal move for the next step.

 - Maze Environment Configuration

 This is a {grid_n}*{grid_n} maze map. Coordinates are given in the format (row number, column number).
The red ball is the start point {start_coor}, and the green ball is the endpoint {end_coor}. Black squares represent impassable walls.
The directions 'D', 'U', 'L', and 'R' represent moving one step Down, Up, Left, and Right, respectively.

 - Current Path Status

 Your current position (the startpoint) is: {cur_coor}.
The coordinate you need to move to as the correct route (the endpoint of the red line in the second image) is {next_coor}.
Future waypoints are: {mid_coor_list}.


Please start your reply immediately with a fluent reasoning process. Your deduction must contain the environment description and satisfy the output format constraints. Your response will be a single, continuous paragraph and will not use any subheadings.
";

pub const ROTATION_THOUGHT: &str = "Two images follow: a picture before and after the call {action}.
Question: {question}

Write one paragraph, in the first person, that explains how the orientation of the first picture can be read from its content (sky, ground, buildings, light source) and why rotating it by {theta} degrees clockwise makes it upright. Do not use headings or lists.
";

pub const SEARCH_THOUGHT: &str = "Two images follow: the current view and the view after the call {action}.
Question: {question}
The object being looked for is the {target}.

Write one paragraph, in the first person, that describes what is visible in the current view, where the {target} seems to be, and why this call narrows the view down or marks the object. Do not use headings or lists.
";

pub const CLOCK_THOUGHT: &str = "Two images follow: the current view and the view after the call {action}.
Question: {question}

Write one paragraph, in the first person, that describes where the clock is, why the hands are hard to read at this size, and how the call makes the hour and minute hands easier to read. Do not use headings or lists.
";

pub const GENERIC_THOUGHT: &str = "Two images follow: the current view and the view after the call {action}.
Question: {question}

Write one paragraph, in the first person, explaining why this call is a useful next step toward answering the question. Do not use headings or lists.
";

pub const IMAGE_SLOT: &str = "{img_url}";

/// Substitutes every `{key}` in `template`.
pub fn fill(template: &str, values: &[(&str, String)]) -> String {
    values
        .iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}
